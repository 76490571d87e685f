#include "obk/query.hpp"

#include <algorithm>
#include <cmath>
#include <compare>
#include <tuple>

#include "obk/error.hpp"

namespace obk {
namespace {

std::partial_ordering compare_int_double(std::int64_t i, double d) {
  if (std::isnan(d)) return std::partial_ordering::unordered;
  constexpr double two63 = 9223372036854775808.0;
  if (d >= two63) return std::partial_ordering::less;
  if (d < -two63) return std::partial_ordering::greater;
  const double t = std::trunc(d);
  const auto ti = static_cast<std::int64_t>(t);
  if (i != ti) return i <=> ti;
  const double frac = d - t;
  if (frac > 0) return std::partial_ordering::less;
  if (frac < 0) return std::partial_ordering::greater;
  return std::partial_ordering::equivalent;
}

[[noreturn]] void mismatch(const IsPredicate& p, const Scalar& stored) {
  throw Error(ErrorCode::TypeMismatch,
              "predicate '" + std::string(to_string(p.op)) + " " + scalar_type_name(p.value) +
                  "' cannot be applied to a " + scalar_type_name(stored) + " value",
              "where");
}

std::partial_ordering compare_values(const IsPredicate& p, const Scalar& stored) {
  const auto a = tag_of(stored);
  const auto b = tag_of(p.value);
  if (a == ScalarTag::Int && b == ScalarTag::Int) return std::get<std::int64_t>(stored) <=> std::get<std::int64_t>(p.value);
  if (a == ScalarTag::Float && b == ScalarTag::Float) return std::get<double>(stored) <=> std::get<double>(p.value);
  if (a == ScalarTag::Int && b == ScalarTag::Float) {
    return compare_int_double(std::get<std::int64_t>(stored), std::get<double>(p.value));
  }
  if (a == ScalarTag::Float && b == ScalarTag::Int) {
    return 0 <=> compare_int_double(std::get<std::int64_t>(p.value), std::get<double>(stored));
  }
  if (a == ScalarTag::Time && b == ScalarTag::Time) return std::get<Timestamp>(stored) <=> std::get<Timestamp>(p.value);
  mismatch(p, stored);
}

}  // namespace

std::vector<RunHeader> find_runs(const Repository& repo, const SearchCriteria& criteria, bool include_open) {
  const auto violations = validate_criteria(criteria);
  if (!violations.empty()) {
    throw Error(ErrorCode::InvalidCriteria, "invalid search criteria: " + violations.front(), violations.front());
  }
  return repo.select_runs(criteria, include_open);
}

RunDetail get_run(const Repository& repo, std::string_view partition, std::uint64_t run_number) {
  return repo.get_run_detail(partition, run_number);
}

std::string_view to_string(PredicateOp op) {
  switch (op) {
    case PredicateOp::Eq: return "=";
    case PredicateOp::Lt: return "<";
    case PredicateOp::Gt: return ">";
    case PredicateOp::Contains: return "contains";
  }
  return "=";
}

std::optional<PredicateOp> parse_predicate_op(std::string_view text) {
  if (text == "=") return PredicateOp::Eq;
  if (text == "<") return PredicateOp::Lt;
  if (text == ">") return PredicateOp::Gt;
  if (text == "contains") return PredicateOp::Contains;
  return std::nullopt;
}

void check_predicate(const IsPredicate& p) {
  const auto tag = tag_of(p.value);
  const bool ok = [&] {
    switch (p.op) {
      case PredicateOp::Eq: return true;
      case PredicateOp::Lt:
      case PredicateOp::Gt: return tag == ScalarTag::Int || tag == ScalarTag::Float || tag == ScalarTag::Time;
      case PredicateOp::Contains: return tag == ScalarTag::Str;
    }
    return false;
  }();
  if (!ok) {
    throw Error(ErrorCode::TypeMismatch,
                "operator '" + std::string(to_string(p.op)) + "' is not defined for " + scalar_type_name(p.value),
                "where");
  }
}

bool predicate_matches(const IsPredicate& p, const Scalar& stored) {
  check_predicate(p);
  switch (p.op) {
    case PredicateOp::Contains: {
      const auto* s = std::get_if<std::string>(&stored);
      if (!s) mismatch(p, stored);
      return s->find(std::get<std::string>(p.value)) != std::string::npos;
    }
    case PredicateOp::Lt: return compare_values(p, stored) == std::partial_ordering::less;
    case PredicateOp::Gt: return compare_values(p, stored) == std::partial_ordering::greater;
    case PredicateOp::Eq: {
      const auto a = tag_of(stored);
      const auto b = tag_of(p.value);
      const bool numeric = (a == ScalarTag::Int || a == ScalarTag::Float) && (b == ScalarTag::Int || b == ScalarTag::Float);
      if (numeric) return compare_values(p, stored) == std::partial_ordering::equivalent;
      if (scalar_type_name(stored) != scalar_type_name(p.value)) mismatch(p, stored);
      return stored == p.value;
    }
  }
  return false;
}

std::vector<IsInstance> find_is_instances(const Repository& repo, std::optional<std::string_view> partition,
                                          std::string_view class_name, std::string_view parameter_name,
                                          const std::optional<IsPredicate>& predicate) {
  if (class_name.empty()) throw Error(ErrorCode::InvalidCriteria, "class name must not be empty", "class");
  if (parameter_name.empty()) throw Error(ErrorCode::InvalidCriteria, "parameter name must not be empty", "param");
  if (predicate) check_predicate(*predicate);
  std::vector<IsInstance> out;
  for (auto& occ : repo.scan_is_attribute(partition, class_name, parameter_name)) {
    if (predicate && !predicate_matches(*predicate, occ.value)) continue;
    out.push_back(IsInstance{std::move(occ.partition), occ.run_number, occ.record_id, std::move(occ.object_name),
                             occ.timestamp, std::move(occ.value)});
  }
  std::sort(out.begin(), out.end(), [](const IsInstance& a, const IsInstance& b) {
    return std::tie(a.partition, a.run_number, a.timestamp, a.record_id) <
           std::tie(b.partition, b.run_number, b.timestamp, b.record_id);
  });
  return out;
}

RunHeaderCursor::RunHeaderCursor(const Repository& repo, std::string partition)
    : repo_(&repo), partition_(std::move(partition)), numbers_(repo.list_run_numbers(partition_)) {}

std::optional<RunHeader> RunHeaderCursor::next() {
  while (pos_ < numbers_.size()) {
    if (auto h = repo_->find_run_header(partition_, numbers_[pos_++])) return h;
  }
  return std::nullopt;
}

RunHeaderCursor iterate_run_headers(const Repository& repo, std::string_view partition) {
  return RunHeaderCursor(repo, std::string(partition));
}

}  // namespace obk
