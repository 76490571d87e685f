#include <algorithm>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "obk/acquisition_server.hpp"
#include "obk/bench.hpp"

namespace obk {
namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? 0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::vector<ScalePoint> run_scalability_bench(BackendId backend, const std::filesystem::path& root_base,
                                              WorkloadSpec spec, const std::vector<std::uint64_t>& publisher_counts,
                                              SyncMode sync) {
  std::vector<ScalePoint> points;
  for (const auto publishers : publisher_counts) {
    spec.publishers = publishers;
    const auto streams = generate_stream(spec);
    const auto root = root_base / ("p" + std::to_string(publishers));
    auto repo = create_repository(backend, root, RepositoryOptions{true, sync});

    std::mutex samples_mutex;
    std::vector<double> store_us;
    AcquisitionServer server(*repo, AcquisitionConfig{});
    server.set_observer([&](const IngestSample& s) {
      if (s.kind != EnvelopeKind::IS || !s.ok) return;
      std::lock_guard guard(samples_mutex);
      store_us.push_back(std::chrono::duration<double, std::micro>(s.store_latency).count());
    });
    server.start();

    std::vector<PublisherResult> results(publishers);
    std::vector<std::thread> threads;
    const auto address = server.address();
    for (std::uint64_t i = 0; i < publishers; ++i) {
      threads.emplace_back([&, i] { results[i] = run_publisher(address, streams[i]); });
    }
    for (auto& t : threads) t.join();
    server.stop();

    ScalePoint point;
    point.publishers = publishers;
    std::vector<double> e2e;
    for (const auto& r : results) {
      point.acked_ok += r.acked_records;
      point.rejected += r.rejected;
      e2e.insert(e2e.end(), r.is_e2e_us.begin(), r.is_e2e_us.end());
    }
    point.is_count = store_us.size();
    point.mean_store_us = mean(store_us);
    point.p95_store_us = percentile(store_us, 95);
    point.mean_e2e_us = mean(e2e);
    point.p95_e2e_us = percentile(e2e, 95);
    point.persisted = count_persisted_records(*repo);
    points.push_back(point);
  }
  return points;
}

void write_scale_csv(const std::vector<ScalePoint>& points, std::ostream& out) {
  out << "publishers,is_count,mean_store_us,p95_store_us,mean_e2e_us,p95_e2e_us,acked_ok,persisted,rejected\n";
  for (const auto& p : points) {
    out << p.publishers << ',' << p.is_count << ',' << p.mean_store_us << ',' << p.p95_store_us << ','
        << p.mean_e2e_us << ',' << p.p95_e2e_us << ',' << p.acked_ok << ',' << p.persisted << ',' << p.rejected
        << '\n';
  }
}

}  // namespace obk
