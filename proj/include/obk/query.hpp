#pragma once

// Read-side API over a repository. Nothing here mutates stored data.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "obk/model.hpp"
#include "obk/storage.hpp"

namespace obk {

// Throws InvalidCriteria (field = offending criterion) for invalid criteria.
std::vector<RunHeader> find_runs(const Repository& repo, const SearchCriteria& criteria, bool include_open = false);

// Throws UnknownRun.
RunDetail get_run(const Repository& repo, std::string_view partition, std::uint64_t run_number);

enum class PredicateOp { Eq, Lt, Gt, Contains };
std::string_view to_string(PredicateOp op);
// "=", "<", ">", "contains".
std::optional<PredicateOp> parse_predicate_op(std::string_view text);

struct IsPredicate {
  PredicateOp op = PredicateOp::Eq;
  Scalar value;
};

// Throws TypeMismatch unless `op` is usable with a value of this type:
// "<" and ">" need int, float or time; "contains" needs str.
void check_predicate(const IsPredicate& predicate);

// Int and float compare numerically with each other; every other pairing
// must have identical types. Throws TypeMismatch for incompatible operands.
bool predicate_matches(const IsPredicate& predicate, const Scalar& stored);

struct IsInstance {
  std::string partition;
  std::uint64_t run_number = 0;
  std::uint64_t record_id = 0;
  std::string object_name;
  Timestamp timestamp{};
  Scalar value;
  friend bool operator==(const IsInstance&, const IsInstance&) = default;
};

// Ordered by (partition, run_number, timestamp, record_id).
std::vector<IsInstance> find_is_instances(const Repository& repo, std::optional<std::string_view> partition,
                                          std::string_view class_name, std::string_view parameter_name,
                                          const std::optional<IsPredicate>& predicate = std::nullopt);

// Walks the runs of one partition in run_number order, one header at a time.
class RunHeaderCursor {
 public:
  RunHeaderCursor(const Repository& repo, std::string partition);
  std::optional<RunHeader> next();

 private:
  const Repository* repo_;
  std::string partition_;
  std::vector<std::uint64_t> numbers_;
  std::size_t pos_ = 0;
};

RunHeaderCursor iterate_run_headers(const Repository& repo, std::string_view partition);

}  // namespace obk
