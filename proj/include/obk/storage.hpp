#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "obk/model.hpp"

namespace obk {

inline constexpr int kRepositoryVersion = 1;

enum class BackendId { FileStore, RelationalStore };
std::string_view to_string(BackendId id);
// Accepts "file"/"relational" as well as the enum names.
std::optional<BackendId> parse_backend_id(std::string_view text);

// Buffered: an acknowledged write survives a process crash (page cache / WAL).
// Durable: additionally fsync'd before returning.
enum class SyncMode { Buffered, Durable };

struct RepositoryOptions {
  bool writable = true;
  SyncMode sync = SyncMode::Buffered;
};

struct StoredMrs {
  std::uint64_t record_id = 0;
  MrsMessage message;
  friend bool operator==(const StoredMrs&, const StoredMrs&) = default;
};

struct StoredIs {
  std::uint64_t record_id = 0;
  IsInfo info;
  friend bool operator==(const StoredIs&, const StoredIs&) = default;
};

// Records are ordered by (timestamp, record_id); comments by comment_id.
struct RunDetail {
  RunHeader header;
  std::vector<StoredMrs> mrs;
  std::vector<StoredIs> is;
  std::vector<Comment> comments;
  friend bool operator==(const RunDetail&, const RunDetail&) = default;
};

using OrphanBody = std::variant<MrsMessage, IsInfo, Comment>;

// Data that arrived while no run was open in its partition (orphan-store policy).
struct OrphanRecord {
  std::string partition;
  std::uint64_t orphan_id = 0;  // 1..k per partition, arrival order
  OrphanBody body;
  friend bool operator==(const OrphanRecord&, const OrphanRecord&) = default;
};
Timestamp orphan_timestamp(const OrphanBody& body);
EnvelopeKind orphan_kind(const OrphanBody& body);

struct StoredAttachment {
  Attachment meta;
  std::string content;
};

// One stored occurrence of an IS attribute.
struct IsOccurrence {
  std::string partition;
  std::uint64_t run_number = 0;
  std::uint64_t record_id = 0;
  std::string object_name;
  Timestamp timestamp{};
  Scalar value;
  friend bool operator==(const IsOccurrence&, const IsOccurrence&) = default;
};

enum class Role { Reader, Writer, Admin };
std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);
// Reader < Writer < Admin.
inline bool role_at_least(Role have, Role need) { return static_cast<int>(have) >= static_cast<int>(need); }

struct UserRecord {
  std::string username;
  std::string password_hash;
  Role role = Role::Reader;
  friend bool operator==(const UserRecord&, const UserRecord&) = default;
};

// Backend-neutral repository. Both implementations are safe for concurrent use
// from multiple threads: writes are serialized per partition, readers only see
// committed runs and records.
class Repository {
 public:
  virtual ~Repository() = default;

  virtual BackendId backend() const = 0;
  virtual const std::filesystem::path& root() const = 0;
  virtual bool writable() const = 0;

  virtual std::vector<std::string> list_partitions() const = 0;

  // Header must be valid with status Open. Throws DuplicateRun, AlreadyOpen.
  virtual void begin_run(const RunHeader& header) = 0;
  // Throws UnknownRun, NotOpen, EndBeforeStart.
  virtual RunHeader end_run(std::string_view partition, std::uint64_t run_number, RunStatus status,
                            std::uint64_t num_events, Timestamp end_time) = 0;
  // Crash recovery: closes an Open run as Bad. end_time is the latest of the
  // start time and all record timestamps. Throws UnknownRun, NotOpen.
  virtual RunHeader force_close(std::string_view partition, std::uint64_t run_number) = 0;

  // Return the per-run record id. Throw UnknownRun, RunClosed.
  virtual std::uint64_t append_mrs(std::string_view partition, std::uint64_t run_number, const MrsMessage& m) = 0;
  virtual std::uint64_t append_is(std::string_view partition, std::uint64_t run_number, const IsInfo& info) = 0;
  // Open or closed runs. comment.comment_id is ignored and assigned here;
  // contents[i] is the blob for comment.attachments[i]. Throws UnknownRun,
  // DigestMismatch.
  virtual std::uint64_t append_comment(std::string_view partition, std::uint64_t run_number, const Comment& comment,
                                       std::span<const std::string> contents) = 0;
  virtual std::uint64_t append_orphan(std::string_view partition, const OrphanBody& body,
                                      std::span<const std::string> contents = {}) = 0;

  virtual std::optional<std::uint64_t> open_run(std::string_view partition) const = 0;
  virtual std::optional<RunHeader> find_run_header(std::string_view partition, std::uint64_t run_number) const = 0;
  // Ordered by (partition, run_number).
  virtual std::vector<RunHeader> list_run_headers(std::optional<std::string_view> partition = std::nullopt) const = 0;
  virtual std::vector<std::uint64_t> list_run_numbers(std::string_view partition) const = 0;
  // Throws UnknownRun.
  virtual RunDetail get_run_detail(std::string_view partition, std::uint64_t run_number) const = 0;
  virtual std::vector<OrphanRecord> list_orphans(std::string_view partition) const = 0;
  virtual std::optional<StoredAttachment> get_attachment(std::string_view digest) const = 0;

  // Query hooks. The defaults scan list_run_headers / get_run_detail; backends
  // may answer them natively.
  virtual std::vector<RunHeader> select_runs(const SearchCriteria& criteria, bool include_open) const;
  // Every stored occurrence of class_name.parameter_name, in no particular order.
  virtual std::vector<IsOccurrence> scan_is_attribute(std::optional<std::string_view> partition,
                                                      std::string_view class_name,
                                                      std::string_view parameter_name) const;

  virtual void put_user(const UserRecord& user) = 0;
  virtual std::optional<UserRecord> get_user(std::string_view username) const = 0;
  virtual std::vector<UserRecord> list_users() const = 0;
};

// Root must be absent or an empty directory. Throws AlreadyExists, PermissionDenied.
std::unique_ptr<Repository> create_repository(BackendId backend, const std::filesystem::path& root,
                                              RepositoryOptions options = {});
// Detects the backend from the root's contents. Throws NotARepository,
// RepositoryVersionMismatch.
std::unique_ptr<Repository> open_repository(const std::filesystem::path& root, RepositoryOptions options = {});
std::optional<BackendId> detect_backend(const std::filesystem::path& root);

// Deterministic, backend-independent serialization of everything in the
// repository except user accounts. First line is "obk-export v1"; each
// following line is one canonical JSON record.
std::string export_canonical(const Repository& repo);

// Online while the run is open, Offline once closed.
CommentOrigin origin_for_run_state(RunStatus status);

}  // namespace obk
