#include <chrono>

#include "obk/acquisition_server.hpp"
#include "obk/bench.hpp"
#include "obk/codec.hpp"
#include "obk/error.hpp"

namespace obk {

ReplayCounts replay_stream(Repository& repo, const std::vector<PublisherStream>& streams, OrphanPolicy policy) {
  ReplayCounts counts;
  std::map<std::string, PartitionState> states;
  ConnectionId connection = 0;
  for (const auto& stream : streams) {
    ++connection;
    for (const auto& e : stream) {
      auto it = states.find(e.partition);
      if (it == states.end()) it = states.emplace(e.partition, load_partition_state(repo, e.partition)).first;
      try {
        const auto effect = handle_envelope(it->second, e, connection, repo, policy);
        ++counts.acked_ok;
        if (effect.kind == EffectKind::RunBegun || effect.kind == EffectKind::RunEnded) {
          ++counts.transitions;
        } else {
          ++counts.records;
        }
      } catch (const Error&) {
        ++counts.rejected;
      }
    }
  }
  return counts;
}

std::uint64_t count_persisted_records(const Repository& repo) {
  std::uint64_t n = 0;
  for (const auto& p : repo.list_partitions()) {
    for (const auto run : repo.list_run_numbers(p)) {
      const auto d = repo.get_run_detail(p, run);
      n += d.mrs.size() + d.is.size() + d.comments.size();
    }
    n += repo.list_orphans(p).size();
  }
  return n;
}

PublisherResult run_publisher(const std::string& address, const PublisherStream& stream) {
  PublisherResult result;
  auto client = EnvelopeClient::connect(address);
  for (const auto& e : stream) {
    const auto line = encode_canonical(e);
    const auto t0 = std::chrono::steady_clock::now();
    const auto reply = client.request(line);
    const auto elapsed = std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = reply == "ok " + std::to_string(e.seq);
    if (ok) {
      ++result.acked_ok;
      if (e.kind != EnvelopeKind::SOR && e.kind != EnvelopeKind::EOR) ++result.acked_records;
    } else {
      ++result.rejected;
    }
    if (e.kind == EnvelopeKind::IS) result.is_e2e_us.push_back(elapsed);
  }
  return result;
}

}  // namespace obk
