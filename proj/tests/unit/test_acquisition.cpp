#include <doctest.h>

#include <algorithm>
#include <thread>

#include "memory_repository.hpp"
#include "obk/acquisition_server.hpp"
#include "obk/codec.hpp"
#include "obk/error.hpp"
#include "testing.hpp"

using namespace obk;
using namespace obk::test;

TEST_CASE("host:port parsing") {
  CHECK(parse_host_port("127.0.0.1:7600") == std::pair<std::string, std::uint16_t>{"127.0.0.1", 7600});
  CHECK_THROWS_AS(parse_host_port("127.0.0.1"), Error);
  CHECK_THROWS_AS(parse_host_port("host:99999"), Error);
  CHECK_THROWS_AS(parse_host_port("host:x"), Error);
}

TEST_CASE("one run with ten IS records over a socket") {
  for (auto backend : kBackends) {
    CAPTURE(to_string(backend));
    TempDir dir;
    auto repo = create_repository(backend, dir / "r");
    AcquisitionServer server(*repo, {});
    server.start();
    auto client = EnvelopeClient::connect(server.address());
    std::uint64_t seq = 1;
    CHECK(client.send(sor_envelope("TB", seq++, base_time(0), 1)) == "ok 1");
    for (int i = 0; i < 10; ++i) {
      CHECK(client.send(is_envelope("TB", seq, base_time(1 + i), i)) == "ok " + std::to_string(seq));
      ++seq;
    }
    CHECK(client.send(eor_envelope("TB", seq, base_time(20), RunStatus::Good, 500)) == "ok 12");
    client.close();
    server.stop();

    const auto d = repo->get_run_detail("TB", 1);
    CHECK(d.header.status == RunStatus::Good);
    CHECK(d.header.num_events == 500);
    REQUIRE(d.is.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(d.is[i].info.attributes.at(0).value == Scalar{static_cast<std::int64_t>(i)});
    }
    const auto c = server.counters();
    CHECK(c.acked_ok == 12);
    CHECK(c.records_persisted + c.transitions == c.acked_ok);
    CHECK(c.rejected == 0);
  }
}

TEST_CASE("a garbage line is answered and the connection keeps working") {
  MemoryRepository repo;
  AcquisitionServer server(repo, {});
  server.start();
  auto client = EnvelopeClient::connect(server.address());
  CHECK(client.request("this is not json") == "err 0 MalformedJson");
  CHECK(client.request(R"({"version":7,"seq":9})") == "err 9 VersionMismatch");
  CHECK(client.send(sor_envelope("TB", 1, base_time(), 1)) == "ok 1");
  CHECK(client.send(sor_envelope("TB", 2, base_time(1), 2)) == "err 2 AlreadyOpen");
  CHECK(client.send(mrs_envelope("TB", 2, base_time(2))) == "err 2 SeqRegression");
  CHECK(client.send(mrs_envelope("TB", 3, base_time(2))) == "ok 3");
  client.close();
  server.stop();
  CHECK(repo.get_run_detail("TB", 1).mrs.size() == 1);
  CHECK(server.counters().rejected == 4);
}

TEST_CASE("filtered envelopes are refused without touching storage") {
  MemoryRepository repo;
  AcquisitionConfig config;
  config.filter.partitions = std::set<std::string>{"TB"};
  AcquisitionServer server(repo, config);
  CHECK(server.handle_line(encode_canonical(sor_envelope("SCT", 4, base_time(), 1)), 1) == "err 4 Filtered");
  CHECK(repo.list_partitions().empty());
  CHECK(server.handle_line(encode_canonical(sor_envelope("TB", 5, base_time(), 1)), 1) == "ok 5");
}

TEST_CASE("orphan-store policy over the pipeline") {
  MemoryRepository repo;
  AcquisitionConfig config;
  config.orphan_policy = OrphanPolicy::Store;
  AcquisitionServer server(repo, config);
  CHECK(server.handle_line(encode_canonical(mrs_envelope("TB", 1, base_time())), 1) == "ok 1");
  CHECK(server.handle_line(encode_canonical(eor_envelope("TB", 2, base_time())), 1) == "err 2 NoOpenRun");
  CHECK(repo.list_orphans("TB").size() == 1);
  const auto c = server.counters();
  CHECK(c.records_persisted == 1);
  CHECK(c.rejected == 1);
}

TEST_CASE("interleaved publishers match a replay of the merged stream") {
  for (auto backend : kBackends) {
    CAPTURE(to_string(backend));
    TempDir dir;
    auto repo = create_repository(backend, dir / "r");
    AcquisitionServer server(*repo, {});
    server.start();

    std::vector<MessageEnvelope> sent;
    auto control = EnvelopeClient::connect(server.address());
    const auto sor = sor_envelope("TB", 1, base_time(0), 1);
    REQUIRE(control.send(sor) == "ok 1");

    constexpr int kPublishers = 2;
    constexpr int kPerPublisher = 200;
    std::vector<std::vector<MessageEnvelope>> streams(kPublishers);
    for (int p = 0; p < kPublishers; ++p) {
      for (int i = 0; i < kPerPublisher; ++i) {
        const auto t = base_time(1) + std::chrono::milliseconds(i * kPublishers + p);
        streams[p].push_back(mrs_envelope("TB", static_cast<std::uint64_t>(i + 1), t,
                                          "pub" + std::to_string(p) + "-" + std::to_string(i)));
      }
    }
    std::vector<std::thread> threads;
    std::vector<int> ok(kPublishers, 0);
    for (int p = 0; p < kPublishers; ++p) {
      threads.emplace_back([&, p] {
        auto c = EnvelopeClient::connect(server.address());
        for (const auto& e : streams[p])
          if (c.send(e).rfind("ok ", 0) == 0) ++ok[p];
      });
    }
    for (auto& t : threads) t.join();
    REQUIRE(control.send(eor_envelope("TB", 2, base_time(100))) == "ok 2");
    control.close();
    server.stop();
    for (int p = 0; p < kPublishers; ++p) CHECK(ok[p] == kPerPublisher);

    std::vector<MessageEnvelope> merged;
    for (const auto& s : streams) merged.insert(merged.end(), s.begin(), s.end());
    std::sort(merged.begin(), merged.end(),
              [](const MessageEnvelope& a, const MessageEnvelope& b) { return a.timestamp < b.timestamp; });
    MemoryRepository replay;
    auto state = load_partition_state(replay, "TB");
    std::uint64_t seq = 1;
    handle_envelope(state, sor, 1, replay, OrphanPolicy::Reject);
    for (auto e : merged) {
      e.seq = ++seq;
      handle_envelope(state, e, 1, replay, OrphanPolicy::Reject);
    }
    handle_envelope(state, eor_envelope("TB", ++seq, base_time(100)), 1, replay, OrphanPolicy::Reject);

    const auto got = repo->get_run_detail("TB", 1);
    const auto want = replay.get_run_detail("TB", 1);
    CHECK(got.header == want.header);
    REQUIRE(got.mrs.size() == want.mrs.size());
    for (std::size_t i = 0; i < got.mrs.size(); ++i) CHECK(got.mrs[i].message == want.mrs[i].message);
  }
}

TEST_CASE("observer sees every handled envelope") {
  MemoryRepository repo;
  AcquisitionServer server(repo, {});
  std::mutex m;
  std::vector<IngestSample> samples;
  server.set_observer([&](const IngestSample& s) {
    std::lock_guard lock(m);
    samples.push_back(s);
  });
  server.start();
  auto client = EnvelopeClient::connect(server.address());
  client.send(sor_envelope("TB", 1, base_time(), 1));
  client.send(mrs_envelope("TB", 2, base_time(1)));
  client.send(sor_envelope("TB", 3, base_time(2), 1));
  client.close();
  server.stop();
  REQUIRE(samples.size() == 3);
  CHECK(samples[0].kind == EnvelopeKind::SOR);
  CHECK(samples[1].ok);
  CHECK_FALSE(samples[2].ok);
}
