#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "obk/bench.hpp"
#include "obk/error.hpp"

namespace obk {

double median(std::vector<double> values) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2;
}

// Nearest-rank percentile, p in [0, 100].
double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = std::min(x.size(), y.size());
  if (n < 2) return 0;
  const double mx = std::accumulate(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
  double sxy = 0;
  double sxx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx == 0 ? 0 : sxy / sxx;
}

std::vector<double> latencies_of(const LatencyReport& report, EnvelopeKind op) {
  std::vector<double> out;
  for (const auto& s : report.samples) {
    if (s.op == op) out.push_back(s.latency_us);
  }
  return out;
}

LatencyReport run_latency_bench(BackendId backend, const std::filesystem::path& root, const WorkloadSpec& spec,
                                SyncMode sync) {
  auto one = spec;
  one.publishers = 1;
  const auto streams = generate_stream(one);
  auto repo = create_repository(backend, root, RepositoryOptions{true, sync});

  LatencyReport report;
  report.backend = backend;
  report.sync = sync;
  PartitionState state = load_partition_state(*repo, bench_partition(0));
  std::uint64_t run_index = 0;
  for (const auto& e : streams.front()) {
    if (e.kind == EnvelopeKind::SOR) ++run_index;
    const auto t0 = std::chrono::steady_clock::now();
    handle_envelope(state, e, 1, *repo, OrphanPolicy::Reject);
    const auto us = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    report.samples.push_back(LatencySample{e.kind, run_index, us});
  }

  for (const auto op : {EnvelopeKind::SOR, EnvelopeKind::EOR, EnvelopeKind::COMMENT, EnvelopeKind::IS,
                        EnvelopeKind::MRS}) {
    const auto v = latencies_of(report, op);
    if (v.empty()) continue;
    LatencySummary s;
    s.op = op;
    s.count = v.size();
    s.min_us = *std::min_element(v.begin(), v.end());
    s.max_us = *std::max_element(v.begin(), v.end());
    s.mean_us = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.median_us = median(v);
    report.summary.push_back(s);
  }

  std::vector<double> x;
  std::vector<double> y;
  for (const auto& s : report.samples) {
    if (s.op != EnvelopeKind::SOR) continue;
    x.push_back(static_cast<double>(s.run_index));
    y.push_back(s.latency_us);
  }
  report.sor_slope_us_per_run = least_squares_slope(x, y);
  return report;
}

void write_latency_series_csv(const LatencyReport& report, std::ostream& out) {
  out << "operation,run_index,latency_us\n";
  for (const auto& s : report.samples) out << to_string(s.op) << ',' << s.run_index << ',' << s.latency_us << '\n';
}

void write_latency_summary_csv(const LatencyReport& report, std::ostream& out) {
  out << "operation,count,min_us,max_us,mean_us,median_us\n";
  for (const auto& s : report.summary) {
    out << to_string(s.op) << ',' << s.count << ',' << s.min_us << ',' << s.max_us << ',' << s.mean_us << ','
        << s.median_us << '\n';
  }
}

void write_latency_gnuplot(const LatencyReport& report, std::ostream& out) {
  std::map<std::uint64_t, std::pair<double, double>> rows;
  for (const auto& s : report.samples) {
    if (s.op == EnvelopeKind::SOR) rows[s.run_index].first = s.latency_us;
    if (s.op == EnvelopeKind::EOR) rows[s.run_index].second = s.latency_us;
  }
  out << "# run_index sor_us eor_us\n";
  for (const auto& [run, v] : rows) out << run << ' ' << v.first << ' ' << v.second << '\n';
}

}  // namespace obk
