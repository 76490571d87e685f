#include <algorithm>
#include <tuple>

#include "obk/codec.hpp"
#include "obk/storage.hpp"

namespace obk {
namespace {

Json orphan_body_json(const OrphanBody& body) {
  return std::visit([](const auto& b) { return to_json(b); }, body);
}

}  // namespace

std::string export_canonical(const Repository& repo) {
  std::string out = "obk-export v1\n";
  auto emit = [&out](const Json& j) {
    out += j.dump();
    out += '\n';
  };

  auto partitions = repo.list_partitions();
  std::sort(partitions.begin(), partitions.end());
  for (const auto& partition : partitions) {
    emit(Json{{"type", "partition"}, {"partition", partition}});

    auto numbers = repo.list_run_numbers(partition);
    std::sort(numbers.begin(), numbers.end());
    for (const auto run_number : numbers) {
      const auto detail = repo.get_run_detail(partition, run_number);
      emit(Json{{"type", "run"}, {"header", to_json(detail.header)}});

      // MRS and IS share the per-run record id sequence; merge them.
      struct Line {
        Timestamp timestamp;
        std::uint64_t record_id;
        Json json;
      };
      std::vector<Line> records;
      records.reserve(detail.mrs.size() + detail.is.size());
      for (const auto& m : detail.mrs) {
        records.push_back({m.message.timestamp, m.record_id,
                           Json{{"type", "mrs"},
                                {"partition", partition},
                                {"run_number", run_number},
                                {"record_id", m.record_id},
                                {"message", to_json(m.message)}}});
      }
      for (const auto& i : detail.is) {
        records.push_back({i.info.timestamp, i.record_id,
                           Json{{"type", "is"},
                                {"partition", partition},
                                {"run_number", run_number},
                                {"record_id", i.record_id},
                                {"info", to_json(i.info)}}});
      }
      std::sort(records.begin(), records.end(), [](const Line& a, const Line& b) {
        return std::tie(a.timestamp, a.record_id) < std::tie(b.timestamp, b.record_id);
      });
      for (const auto& r : records) emit(r.json);

      auto comments = detail.comments;
      std::sort(comments.begin(), comments.end(),
                [](const Comment& a, const Comment& b) { return a.comment_id < b.comment_id; });
      for (const auto& c : comments) {
        emit(Json{{"type", "comment"}, {"partition", partition}, {"run_number", run_number}, {"comment", to_json(c)}});
      }
    }

    auto orphans = repo.list_orphans(partition);
    std::sort(orphans.begin(), orphans.end(), [](const OrphanRecord& a, const OrphanRecord& b) {
      return std::make_tuple(orphan_timestamp(a.body), a.orphan_id) <
             std::make_tuple(orphan_timestamp(b.body), b.orphan_id);
    });
    for (const auto& o : orphans) {
      emit(Json{{"type", "orphan"},
                {"partition", partition},
                {"orphan_id", o.orphan_id},
                {"kind", to_string(orphan_kind(o.body))},
                {"record", orphan_body_json(o.body)}});
    }
  }
  return out;
}

}  // namespace obk
