#include <doctest.h>

#include "memory_repository.hpp"
#include "obk/error.hpp"
#include "obk/query.hpp"
#include "oracles.hpp"
#include "testing.hpp"

using namespace obk;
using namespace obk::test;

namespace {

std::vector<std::uint64_t> numbers(const std::vector<RunHeader>& v) {
  std::vector<std::uint64_t> out;
  for (const auto& h : v) out.push_back(h.run_number);
  return out;
}

void three_runs(Repository& repo) {
  repo.begin_run(open_header("TB", 1, base_time(0)));
  repo.end_run("TB", 1, RunStatus::Good, 10, base_time(10));
  repo.begin_run(open_header("TB", 2, base_time(20)));
  repo.end_run("TB", 2, RunStatus::Bad, 5, base_time(30));
  repo.begin_run(open_header("TB", 3, base_time(40)));
}

}  // namespace

TEST_CASE("empty criteria: newest first, open runs excluded") {
  for (auto backend : kBackends) {
    TempDir dir;
    auto repo = create_repository(backend, dir / "r");
    three_runs(*repo);
    CHECK(numbers(find_runs(*repo, SearchCriteria{})) == std::vector<std::uint64_t>{2, 1});
    CHECK(numbers(find_runs(*repo, SearchCriteria{}, true)) == std::vector<std::uint64_t>{3, 2, 1});
  }
}

TEST_CASE("beam type matches without regard to ASCII case") {
  for (auto backend : kBackends) {
    TempDir dir;
    auto repo = create_repository(backend, dir / "r");
    three_runs(*repo);
    SearchCriteria c;
    c.trigger_type = TriggerType(TriggerType::Kind::Physics);
    c.beam_type = "muons";
    CHECK(numbers(find_runs(*repo, c)) == std::vector<std::uint64_t>{2, 1});
    c.beam_type = "muon";
    CHECK(find_runs(*repo, c).empty());
  }
}

TEST_CASE("invalid criteria name the field") {
  MemoryRepository repo;
  SearchCriteria c;
  c.start_from = base_time(10);
  c.start_to = base_time(0);
  try {
    find_runs(repo, c);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidCriteria);
    CHECK(e.field() == "start_from");
  }
}

TEST_CASE("200 random headers against 100 random criteria") {
  Gen g(2024);
  MemoryRepository memory;
  TempDir dir;
  auto rel = create_repository(BackendId::RelationalStore, dir / "r");
  std::vector<RunHeader> headers;
  for (std::uint64_t n = 1; n <= 200; ++n) {
    const std::string partition = n % 3 ? "TB" : "DF";
    auto h = g.header(partition, n);
    if (h.status == RunStatus::Open && n < 190) h.status = RunStatus::Good;
    if (h.status == RunStatus::Good && !h.end_time) h.end_time = h.start_time;
    headers.push_back(h);
  }
  for (auto* repo : std::vector<Repository*>{&memory, rel.get()}) {
    for (const auto& h : headers) {
      RunHeader o = h;
      o.status = RunStatus::Open;
      o.end_time.reset();
      o.num_events = 0;
      if (repo->open_run(h.partition)) continue;
      repo->begin_run(o);
      if (h.status != RunStatus::Open) repo->end_run(h.partition, h.run_number, h.status, h.num_events, *h.end_time);
    }
  }
  const auto stored = memory.list_run_headers();
  REQUIRE(stored == rel->list_run_headers());
  int mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    const auto c = g.criteria();
    for (bool include_open : {false, true}) {
      const auto want = naive_find_runs(stored, c, include_open);
      if (find_runs(memory, c, include_open) != want) ++mismatches;
      if (find_runs(*rel, c, include_open) != want) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("IS instances with and without a predicate") {
  for (auto backend : kBackends) {
    CAPTURE(to_string(backend));
    TempDir dir;
    auto repo = create_repository(backend, dir / "r");
    repo->begin_run(open_header("TB", 1, base_time()));
    repo->append_is("TB", 1, is_info(base_time(2), "RunParams", {{"beam_energy", std::int64_t{150}}}, "b"));
    repo->append_is("TB", 1, is_info(base_time(1), "RunParams", {{"beam_energy", std::int64_t{50}}}, "a"));
    repo->append_is("TB", 1, is_info(base_time(3), "Other", {{"beam_energy", std::int64_t{999}}}, "c"));
    repo->end_run("TB", 1, RunStatus::Good, 1, base_time(10));
    repo->begin_run(open_header("TB", 2, base_time(20)));
    repo->append_is("TB", 2, is_info(base_time(21), "RunParams", {{"beam_energy", 100.5}}, "d"));

    const auto all = find_is_instances(*repo, std::nullopt, "RunParams", "beam_energy");
    REQUIRE(all.size() == 3);
    CHECK(all[0].object_name == "a");
    CHECK(all[1].object_name == "b");
    CHECK(all[2].object_name == "d");
    CHECK(all[2].run_number == 2);

    const auto big = find_is_instances(*repo, std::nullopt, "RunParams", "beam_energy",
                                       IsPredicate{PredicateOp::Gt, std::int64_t{100}});
    REQUIRE(big.size() == 2);
    CHECK(big[0].value == Scalar{std::int64_t{150}});
    CHECK(big[1].value == Scalar{100.5});

    CHECK(find_is_instances(*repo, std::nullopt, "RunParams", "beam_energy", IsPredicate{PredicateOp::Eq, 100.5})
              .size() == 1);
    CHECK(find_is_instances(*repo, std::string_view("XX"), "RunParams", "beam_energy").empty());
  }
}

TEST_CASE("predicate typing") {
  CHECK_THROWS_AS(check_predicate(IsPredicate{PredicateOp::Lt, std::string("abc")}), Error);
  CHECK_THROWS_AS(check_predicate(IsPredicate{PredicateOp::Contains, std::int64_t{1}}), Error);
  CHECK_NOTHROW(check_predicate(IsPredicate{PredicateOp::Lt, base_time()}));
  CHECK(predicate_matches(IsPredicate{PredicateOp::Contains, std::string("ops")}, std::string("ops-a")));
  CHECK(predicate_matches(IsPredicate{PredicateOp::Eq, std::int64_t{2}}, 2.0));
  // 2^53 + 1 is not representable as a double; exact comparison must notice.
  CHECK_FALSE(predicate_matches(IsPredicate{PredicateOp::Eq, 9007199254740992.0}, std::int64_t{9007199254740993}));
  CHECK(predicate_matches(IsPredicate{PredicateOp::Gt, 9007199254740992.0}, std::int64_t{9007199254740993}));
  try {
    predicate_matches(IsPredicate{PredicateOp::Lt, std::int64_t{1}}, std::string("x"));
    FAIL("compared");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TypeMismatch);
  }
  CHECK(parse_predicate_op("contains") == PredicateOp::Contains);
  CHECK_FALSE(parse_predicate_op("<="));
}

TEST_CASE("a string parameter cannot be ordered") {
  MemoryRepository repo;
  repo.begin_run(open_header("TB", 1, base_time()));
  repo.append_is("TB", 1, is_info(base_time(1), "RunParams", {{"operator", std::string("ops-a")}}));
  try {
    find_is_instances(repo, std::nullopt, "RunParams", "operator", IsPredicate{PredicateOp::Lt, std::int64_t{3}});
    FAIL("compared");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TypeMismatch);
  }
  CHECK_THROWS_AS(find_is_instances(repo, std::nullopt, "", "operator"), Error);
}

TEST_CASE("random IS streams against a full scan") {
  for (auto backend : kBackends) {
    CAPTURE(to_string(backend));
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      TempDir dir;
      auto repo = create_repository(backend, dir / "r");
      const auto stats = query_oracle(*repo, seed, 30, 60);
      CHECK_MESSAGE(stats.mismatches == 0, stats.first_mismatch);
    }
  }
}

TEST_CASE("header cursor walks run numbers in order") {
  MemoryRepository repo;
  for (std::uint64_t n : {5, 1, 3}) {
    repo.begin_run(open_header("TB", n, base_time()));
    repo.end_run("TB", n, RunStatus::Good, 0, base_time(1));
  }
  repo.begin_run(open_header("DF", 2, base_time()));
  auto cursor = iterate_run_headers(repo, "TB");
  std::vector<std::uint64_t> seen;
  while (auto h = cursor.next()) seen.push_back(h->run_number);
  CHECK(seen == std::vector<std::uint64_t>{1, 3, 5});
}

TEST_CASE("get_run reports unknown runs") {
  MemoryRepository repo;
  CHECK_THROWS_AS(get_run(repo, "TB", 1), Error);
}
