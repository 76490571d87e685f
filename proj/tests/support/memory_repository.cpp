#include "memory_repository.hpp"

#include <algorithm>

#include "obk/digest.hpp"
#include "obk/error.hpp"

namespace obk::test {

namespace {

std::string run_name(std::string_view p, std::uint64_t n) { return std::string(p) + "/" + std::to_string(n); }

void verify(const Comment& c, std::span<const std::string> contents) {
  if (c.attachments.size() != contents.size()) throw Error(ErrorCode::InvalidValue, "blob count");
  for (std::size_t i = 0; i < contents.size(); ++i) {
    if (c.attachments[i].size_bytes != contents[i].size() || sha256_hex(contents[i]) != c.attachments[i].digest) {
      throw Error(ErrorCode::DigestMismatch, "digest");
    }
  }
}

}  // namespace

std::vector<std::string> MemoryRepository::list_partitions() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : partitions_) out.push_back(name);
  return out;
}

MemoryRepository::Run& MemoryRepository::run(std::string_view partition, std::uint64_t run_number) {
  const auto it = runs_.find(Key{std::string(partition), run_number});
  if (it == runs_.end()) throw Error(ErrorCode::UnknownRun, "unknown run " + run_name(partition, run_number));
  return it->second;
}

MemoryRepository::Run& MemoryRepository::open_for_append(std::string_view partition, std::uint64_t run_number) {
  auto& r = run(partition, run_number);
  if (r.detail.header.status != RunStatus::Open) throw Error(ErrorCode::RunClosed, "closed");
  return r;
}

void MemoryRepository::begin_run(const RunHeader& header) {
  if (runs_.count(Key{header.partition, header.run_number})) throw Error(ErrorCode::DuplicateRun, "duplicate");
  if (open_run(header.partition)) throw Error(ErrorCode::AlreadyOpen, "already open");
  partitions_[header.partition];
  runs_[Key{header.partition, header.run_number}].detail.header = header;
}

RunHeader MemoryRepository::end_run(std::string_view partition, std::uint64_t run_number, RunStatus status,
                                    std::uint64_t num_events, Timestamp end_time) {
  auto& h = run(partition, run_number).detail.header;
  if (h.status != RunStatus::Open) throw Error(ErrorCode::NotOpen, "not open");
  if (end_time < h.start_time) throw Error(ErrorCode::EndBeforeStart, "end before start");
  h.status = status;
  h.num_events = num_events;
  h.end_time = end_time;
  return h;
}

RunHeader MemoryRepository::force_close(std::string_view partition, std::uint64_t run_number) {
  auto& r = run(partition, run_number);
  auto& h = r.detail.header;
  if (h.status != RunStatus::Open) throw Error(ErrorCode::NotOpen, "not open");
  auto end = h.start_time;
  for (const auto& m : r.detail.mrs) end = std::max(end, m.message.timestamp);
  for (const auto& i : r.detail.is) end = std::max(end, i.info.timestamp);
  for (const auto& c : r.detail.comments) end = std::max(end, c.created_at);
  h.status = RunStatus::Bad;
  h.end_time = end;
  return h;
}

std::uint64_t MemoryRepository::append_mrs(std::string_view partition, std::uint64_t run_number,
                                           const MrsMessage& m) {
  auto& r = open_for_append(partition, run_number);
  r.detail.mrs.push_back(StoredMrs{r.next_record, m});
  return r.next_record++;
}

std::uint64_t MemoryRepository::append_is(std::string_view partition, std::uint64_t run_number, const IsInfo& info) {
  auto& r = open_for_append(partition, run_number);
  r.detail.is.push_back(StoredIs{r.next_record, info});
  return r.next_record++;
}

std::uint64_t MemoryRepository::append_comment(std::string_view partition, std::uint64_t run_number,
                                               const Comment& comment, std::span<const std::string> contents) {
  auto& r = run(partition, run_number);
  verify(comment, contents);
  Comment c = comment;
  c.comment_id = r.detail.comments.size() + 1;
  r.detail.comments.push_back(c);
  for (std::size_t i = 0; i < contents.size(); ++i) {
    blobs_[c.attachments[i].digest] = StoredAttachment{c.attachments[i], contents[i]};
  }
  return c.comment_id;
}

std::uint64_t MemoryRepository::append_orphan(std::string_view partition, const OrphanBody& body,
                                              std::span<const std::string> contents) {
  OrphanBody stored = body;
  if (auto* c = std::get_if<Comment>(&stored)) {
    verify(*c, contents);
    c->comment_id = 0;
    for (std::size_t i = 0; i < contents.size(); ++i) {
      blobs_[c->attachments[i].digest] = StoredAttachment{c->attachments[i], contents[i]};
    }
  }
  auto& list = partitions_[std::string(partition)];
  list.push_back(OrphanRecord{std::string(partition), list.size() + 1, stored});
  return list.size();
}

std::optional<std::uint64_t> MemoryRepository::open_run(std::string_view partition) const {
  for (const auto& [key, r] : runs_) {
    if (key.first == partition && r.detail.header.status == RunStatus::Open) return key.second;
  }
  return std::nullopt;
}

std::optional<RunHeader> MemoryRepository::find_run_header(std::string_view partition,
                                                           std::uint64_t run_number) const {
  const auto it = runs_.find(Key{std::string(partition), run_number});
  if (it == runs_.end()) return std::nullopt;
  return it->second.detail.header;
}

std::vector<RunHeader> MemoryRepository::list_run_headers(std::optional<std::string_view> partition) const {
  std::vector<RunHeader> out;
  for (const auto& [key, r] : runs_) {
    if (!partition || key.first == *partition) out.push_back(r.detail.header);
  }
  return out;
}

std::vector<std::uint64_t> MemoryRepository::list_run_numbers(std::string_view partition) const {
  std::vector<std::uint64_t> out;
  for (const auto& [key, _] : runs_) {
    if (key.first == partition) out.push_back(key.second);
  }
  return out;
}

RunDetail MemoryRepository::get_run_detail(std::string_view partition, std::uint64_t run_number) const {
  const auto it = runs_.find(Key{std::string(partition), run_number});
  if (it == runs_.end()) throw Error(ErrorCode::UnknownRun, "unknown run");
  RunDetail d = it->second.detail;
  std::stable_sort(d.mrs.begin(), d.mrs.end(), [](const StoredMrs& a, const StoredMrs& b) {
    return std::tie(a.message.timestamp, a.record_id) < std::tie(b.message.timestamp, b.record_id);
  });
  std::stable_sort(d.is.begin(), d.is.end(), [](const StoredIs& a, const StoredIs& b) {
    return std::tie(a.info.timestamp, a.record_id) < std::tie(b.info.timestamp, b.record_id);
  });
  return d;
}

std::vector<OrphanRecord> MemoryRepository::list_orphans(std::string_view partition) const {
  const auto it = partitions_.find(std::string(partition));
  return it == partitions_.end() ? std::vector<OrphanRecord>{} : it->second;
}

std::optional<StoredAttachment> MemoryRepository::get_attachment(std::string_view digest) const {
  const auto it = blobs_.find(std::string(digest));
  if (it == blobs_.end()) return std::nullopt;
  return it->second;
}

std::optional<UserRecord> MemoryRepository::get_user(std::string_view username) const {
  const auto it = users_.find(std::string(username));
  if (it == users_.end()) return std::nullopt;
  return it->second;
}

std::vector<UserRecord> MemoryRepository::list_users() const {
  std::vector<UserRecord> out;
  for (const auto& [_, u] : users_) out.push_back(u);
  return out;
}

}  // namespace obk::test
