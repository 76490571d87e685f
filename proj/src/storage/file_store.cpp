// Per-run XML file backend.
//
// Layout under the repository root:
//   obk-meta.json                       format/version stamp and partition list
//   users.json                          user accounts
//   <partition>/run_<10 digits>.xml     one document per run
//   <partition>/run_<10 digits>.journal records of the open run (JSON lines)
//   <partition>/attachments/<digest>    content-addressed blobs (+ <digest>.json metadata)
//   <partition>/orphans.jsonl           data received with no open run
//   <partition>/.lock                   cross-process writer lock (flock)
//
// The journal exists exactly while the run is open; closing folds it into
// the XML document (atomic rename) and unlinks it.

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <sstream>

#include "common.hpp"
#include "obk/codec.hpp"
#include "xml_codec.hpp"

namespace obk::storage_detail {
namespace {

namespace fs = std::filesystem;

constexpr std::string_view kFormatName = "obk-filestore";
constexpr std::string_view kUsersName = "users.json";
constexpr std::string_view kOrphansName = "orphans.jsonl";
constexpr std::string_view kLockName = ".lock";
constexpr std::string_view kRootLockName = ".obk-lock";
constexpr std::string_view kAttachmentsDir = "attachments";

[[noreturn]] void io_error(const std::string& what, int err = errno) {
  throw Error(ErrorCode::Io, what + ": " + std::strerror(err));
}

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Fd& operator=(Fd&& other) noexcept {
    if (this != &other) {
      reset();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

// Exclusive flock held for the lifetime of the guard.
class FileLock {
 public:
  explicit FileLock(int fd) : fd_(fd) {
    while (::flock(fd_, LOCK_EX) != 0) {
      if (errno != EINTR) io_error("flock");
    }
  }
  ~FileLock() { ::flock(fd_, LOCK_UN); }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_;
};

Fd open_lock_file(const fs::path& path) {
  const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) {
    // Read-only repositories may not allow creating the lock file.
    const int ro = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (ro < 0) io_error("cannot open lock file " + path.string());
    return Fd{ro};
  }
  return Fd{fd};
}

void write_all(int fd, std::string_view data, const fs::path& what) {
  while (!data.empty()) {
    const auto n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error("write " + what.string());
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

void fsync_dir(const fs::path& dir) {
  Fd fd{::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC)};
  if (fd) ::fsync(fd.get());
}

void write_file_atomic(const fs::path& path, std::string_view content, SyncMode sync) {
  auto tmp = path;
  tmp += ".tmp";
  {
    Fd fd{::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644)};
    if (!fd) io_error("cannot create " + tmp.string());
    write_all(fd.get(), content, tmp);
    if (sync == SyncMode::Durable && ::fsync(fd.get()) != 0) io_error("fsync " + tmp.string());
  }
  if (::rename(tmp.c_str(), path.c_str()) != 0) io_error("rename " + tmp.string());
  if (sync == SyncMode::Durable) fsync_dir(path.parent_path());
}

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

// Reads at least up to the end of the header element.
std::optional<std::string> read_header_prefix(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string buf;
  std::size_t chunk = 4096;
  while (true) {
    const auto old = buf.size();
    buf.resize(old + chunk);
    in.read(buf.data() + old, static_cast<std::streamsize>(chunk));
    buf.resize(old + static_cast<std::size_t>(in.gcount()));
    if (buf.find("</header>") != std::string::npos || !in) return buf;
    chunk *= 2;
  }
}

std::string run_stem(std::uint64_t run_number) {
  std::string digits = std::to_string(run_number);
  return "run_" + std::string(10 - std::min<std::size_t>(10, digits.size()), '0') + digits;
}

// Parses "run_<10 digits><suffix>".
std::optional<std::uint64_t> parse_run_file(std::string_view name, std::string_view suffix) {
  if (name.size() != 4 + 10 + suffix.size() || name.substr(0, 4) != "run_" || name.substr(14) != suffix) {
    return std::nullopt;
  }
  std::uint64_t v = 0;
  const auto* first = name.data() + 4;
  const auto res = std::from_chars(first, first + 10, v);
  if (res.ec != std::errc{} || res.ptr != first + 10) return std::nullopt;
  return v;
}

struct JournalContents {
  std::vector<StoredMrs> mrs;
  std::vector<StoredIs> is;
  std::vector<Comment> comments;
  std::uint64_t max_record_id = 0;
  std::uint64_t max_comment_id = 0;
};

// A trailing line without '\n' is an in-flight append and is ignored.
JournalContents parse_journal(std::string_view data, const fs::path& origin) {
  JournalContents out;
  std::size_t pos = 0;
  while (true) {
    const auto nl = data.find('\n', pos);
    if (nl == std::string_view::npos) break;
    const auto line = data.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    const auto j = Json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("type")) {
      throw Error(ErrorCode::Io, "corrupt journal line in " + origin.string());
    }
    const auto type = j.at("type").get<std::string>();
    if (type == "mrs") {
      StoredMrs r{j.at("record_id").get<std::uint64_t>(), mrs_from_json(j.at("message"))};
      out.max_record_id = std::max(out.max_record_id, r.record_id);
      out.mrs.push_back(std::move(r));
    } else if (type == "is") {
      StoredIs r{j.at("record_id").get<std::uint64_t>(), is_info_from_json(j.at("info"))};
      out.max_record_id = std::max(out.max_record_id, r.record_id);
      out.is.push_back(std::move(r));
    } else if (type == "comment") {
      auto c = comment_from_json(j.at("comment"));
      out.max_comment_id = std::max(out.max_comment_id, c.comment_id);
      out.comments.push_back(std::move(c));
    } else {
      throw Error(ErrorCode::Io, "unknown journal record type in " + origin.string());
    }
  }
  return out;
}

Json orphan_to_json(const OrphanRecord& o) {
  return Json{{"orphan_id", o.orphan_id},
              {"kind", to_string(orphan_kind(o.body))},
              {"record", std::visit([](const auto& b) { return to_json(b); }, o.body)}};
}

OrphanRecord orphan_from_json(std::string_view partition, const Json& j) {
  OrphanRecord o;
  o.partition = std::string(partition);
  o.orphan_id = j.at("orphan_id").get<std::uint64_t>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "MRS") {
    o.body = mrs_from_json(j.at("record"));
  } else if (kind == "IS") {
    o.body = is_info_from_json(j.at("record"));
  } else {
    o.body = comment_from_json(j.at("record"));
  }
  return o;
}

class FileStore final : public Repository {
 public:
  FileStore(fs::path root, RepositoryOptions options) : root_(std::move(root)), options_(options) {}

  void initialize_new() {
    write_meta({});
    write_file_atomic(root_ / kUsersName, Json{{"users", Json::array()}}.dump() + "\n", options_.sync);
  }

  void open_existing() {
    const auto meta = read_meta();
    if (options_.writable) recover();
    (void)meta;
  }

  BackendId backend() const override { return BackendId::FileStore; }
  const fs::path& root() const override { return root_; }
  bool writable() const override { return options_.writable; }

  std::vector<std::string> list_partitions() const override {
    auto parts = read_meta();
    std::sort(parts.begin(), parts.end());
    return parts;
  }

  void begin_run(const RunHeader& header) override {
    require_writable(*this);
    require_valid(validate_header(header), "run header");
    if (header.status != RunStatus::Open) {
      throw Error(ErrorCode::InvalidValue, "begin_run needs an Open header", "status");
    }
    auto& slot = ensure_partition(header.partition);
    std::unique_lock guard(slot.mutex);
    FileLock lock(slot.lock_fd.get());

    // Re-list the run directory to detect duplicates and an already open run.
    const auto dir = partition_dir(header.partition);
    std::vector<std::uint64_t> journals;
    std::vector<std::uint64_t> runs;
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (const auto n = parse_run_file(name, ".xml")) {
        runs.push_back(*n);
      } else if (const auto j = parse_run_file(name, ".journal")) {
        journals.push_back(*j);
      }
    }
    if (std::find(runs.begin(), runs.end(), header.run_number) != runs.end()) {
      throw Error(ErrorCode::DuplicateRun, "run " + header.partition + "/" + std::to_string(header.run_number) +
                                               " already exists");
    }
    for (const auto j : journals) {
      if (std::find(runs.begin(), runs.end(), j) != runs.end()) {
        throw Error(ErrorCode::AlreadyOpen,
                    "partition " + header.partition + " already has open run " + std::to_string(j));
      }
    }

    const auto journal = journal_path(header.partition, header.run_number);
    Fd fd{::open(journal.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_APPEND | O_CLOEXEC, 0644)};
    if (!fd) io_error("cannot create journal " + journal.string());
    RunDetail detail;
    detail.header = header;
    write_file_atomic(run_path(header.partition, header.run_number), run_to_xml(detail), options_.sync);

    OpenJournal cache;
    cache.fd = std::move(fd);
    slot.open[header.run_number] = std::move(cache);
  }

  RunHeader end_run(std::string_view partition, std::uint64_t run_number, RunStatus status,
                    std::uint64_t num_events, Timestamp end_time) override {
    require_writable(*this);
    if (status == RunStatus::Open) {
      throw Error(ErrorCode::InvalidValue, "end_run status must be Good or Bad", "status");
    }
    return close_run(partition, run_number, [&](RunDetail& d) {
      d.header.status = status;
      d.header.num_events = num_events;
      d.header.end_time = end_time;
    });
  }

  RunHeader force_close(std::string_view partition, std::uint64_t run_number) override {
    require_writable(*this);
    return close_run(partition, run_number, [](RunDetail& d) {
      auto end = d.header.start_time;
      for (const auto& m : d.mrs) end = std::max(end, m.message.timestamp);
      for (const auto& i : d.is) end = std::max(end, i.info.timestamp);
      for (const auto& c : d.comments) end = std::max(end, c.created_at);
      d.header.status = RunStatus::Bad;
      d.header.end_time = end;
    });
  }

  std::uint64_t append_mrs(std::string_view partition, std::uint64_t run_number, const MrsMessage& m) override {
    require_writable(*this);
    require_valid(validate_mrs(m), "MRS message");
    return append_record(partition, run_number, [&](std::uint64_t id) {
      return Json{{"type", "mrs"}, {"record_id", id}, {"message", to_json(m)}};
    });
  }

  std::uint64_t append_is(std::string_view partition, std::uint64_t run_number, const IsInfo& info) override {
    require_writable(*this);
    require_valid(validate_is_info(info), "IS information");
    return append_record(partition, run_number, [&](std::uint64_t id) {
      return Json{{"type", "is"}, {"record_id", id}, {"info", to_json(info)}};
    });
  }

  std::uint64_t append_comment(std::string_view partition, std::uint64_t run_number, const Comment& comment,
                               std::span<const std::string> contents) override {
    require_writable(*this);
    require_valid(validate_comment(comment), "comment");
    verify_attachments(comment, contents);
    auto* slot = find_slot(partition);
    if (!slot) throw unknown_run(partition, run_number);
    std::unique_lock guard(slot->mutex);
    FileLock lock(slot->lock_fd.get());

    if (auto* open = open_journal(*slot, partition, run_number)) {
      store_blobs(partition, comment, contents);
      Comment c = comment;
      c.comment_id = open->next_comment_id;
      write_journal_line(*open, Json{{"type", "comment"}, {"comment", to_json(c)}}, partition, run_number);
      ++open->next_comment_id;
      return c.comment_id;
    }
    // Closed run: rewrite its document with the comment appended.
    auto doc = read_file(run_path(partition, run_number));
    if (!doc) throw unknown_run(partition, run_number);
    auto detail = run_from_xml(*doc, run_path(partition, run_number).string());
    std::uint64_t next = 1;
    for (const auto& c : detail.comments) next = std::max(next, c.comment_id + 1);
    store_blobs(partition, comment, contents);
    Comment c = comment;
    c.comment_id = next;
    detail.comments.push_back(c);
    write_file_atomic(run_path(partition, run_number), run_to_xml(detail), options_.sync);
    return c.comment_id;
  }

  std::uint64_t append_orphan(std::string_view partition, const OrphanBody& body,
                              std::span<const std::string> contents) override {
    require_writable(*this);
    if (!valid_partition_name(partition)) {
      throw Error(ErrorCode::InvalidValue, "invalid partition name", "partition");
    }
    std::visit(
        [&](const auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, MrsMessage>) {
            require_valid(validate_mrs(b), "MRS message");
          } else if constexpr (std::is_same_v<T, IsInfo>) {
            require_valid(validate_is_info(b), "IS information");
          } else {
            require_valid(validate_comment(b), "comment");
            verify_attachments(b, contents);
          }
        },
        body);
    auto& slot = ensure_partition(partition);
    std::unique_lock guard(slot.mutex);
    FileLock lock(slot.lock_fd.get());
    const auto path = partition_dir(partition) / kOrphansName;
    std::uint64_t next = 1;
    for (const auto& o : read_orphans(partition)) next = std::max(next, o.orphan_id + 1);
    if (const auto* c = std::get_if<Comment>(&body)) store_blobs(partition, *c, contents);
    OrphanRecord record{std::string(partition), next, body};
    if (auto* c = std::get_if<Comment>(&record.body)) c->comment_id = 0;
    Fd fd{::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644)};
    if (!fd) io_error("cannot open " + path.string());
    write_all(fd.get(), orphan_to_json(record).dump() + "\n", path);
    if (options_.sync == SyncMode::Durable) ::fdatasync(fd.get());
    return next;
  }

  std::optional<std::uint64_t> open_run(std::string_view partition) const override {
    if (!valid_partition_name(partition)) return std::nullopt;
    const auto dir = partition_dir(partition);
    std::error_code ec;
    if (!fs::is_directory(dir, ec)) return std::nullopt;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
      if (const auto j = parse_run_file(entry.path().filename().string(), ".journal")) {
        const auto h = find_run_header(partition, *j);
        if (h && h->status == RunStatus::Open) return *j;
      }
    }
    return std::nullopt;
  }

  std::optional<RunHeader> find_run_header(std::string_view partition, std::uint64_t run_number) const override {
    if (!valid_partition_name(partition)) return std::nullopt;
    const auto path = run_path(partition, run_number);
    const auto prefix = read_header_prefix(path);
    if (!prefix) return std::nullopt;
    return header_from_xml(*prefix, path.string());
  }

  std::vector<RunHeader> list_run_headers(std::optional<std::string_view> partition) const override {
    std::vector<std::string> parts;
    if (partition) {
      parts.emplace_back(*partition);
    } else {
      parts = list_partitions();
    }
    std::vector<RunHeader> out;
    for (const auto& p : parts) {
      for (const auto n : list_run_numbers(p)) {
        if (auto h = find_run_header(p, n)) out.push_back(std::move(*h));
      }
    }
    return out;
  }

  std::vector<std::uint64_t> list_run_numbers(std::string_view partition) const override {
    std::vector<std::uint64_t> out;
    if (!valid_partition_name(partition)) return out;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(partition_dir(partition), ec)) {
      if (const auto n = parse_run_file(entry.path().filename().string(), ".xml")) out.push_back(*n);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  RunDetail get_run_detail(std::string_view partition, std::uint64_t run_number) const override {
    if (!valid_partition_name(partition)) throw unknown_run(partition, run_number);
    const auto* slot = find_slot(partition);
    std::shared_lock<std::shared_mutex> guard;
    if (slot) guard = std::shared_lock(slot->mutex);
    const auto path = run_path(partition, run_number);
    // A concurrent close in another process can unlink the journal between
    // the two reads; the second attempt then sees the folded document.
    for (int attempt = 0; attempt < 3; ++attempt) {
      const auto doc = read_file(path);
      if (!doc) throw unknown_run(partition, run_number);
      auto detail = run_from_xml(*doc, path.string());
      if (detail.header.status == RunStatus::Open) {
        const auto journal = read_file(journal_path(partition, run_number));
        if (!journal) continue;
        auto contents = parse_journal(*journal, journal_path(partition, run_number));
        std::move(contents.mrs.begin(), contents.mrs.end(), std::back_inserter(detail.mrs));
        std::move(contents.is.begin(), contents.is.end(), std::back_inserter(detail.is));
        std::move(contents.comments.begin(), contents.comments.end(), std::back_inserter(detail.comments));
      }
      sort_detail(detail);
      return detail;
    }
    throw Error(ErrorCode::Io, "run " + std::string(partition) + "/" + std::to_string(run_number) +
                                   " changed state while being read");
  }

  std::vector<OrphanRecord> list_orphans(std::string_view partition) const override {
    if (!valid_partition_name(partition)) return {};
    return read_orphans(partition);
  }

  std::optional<StoredAttachment> get_attachment(std::string_view digest) const override {
    if (!valid_digest(digest)) return std::nullopt;
    for (const auto& p : list_partitions()) {
      const auto dir = partition_dir(p) / kAttachmentsDir;
      auto content = read_file(dir / std::string(digest));
      if (!content) continue;
      const auto meta = read_file(dir / (std::string(digest) + ".json"));
      if (!meta) continue;
      return StoredAttachment{attachment_from_json(Json::parse(*meta)), std::move(*content)};
    }
    return std::nullopt;
  }

  void put_user(const UserRecord& user) override {
    require_writable(*this);
    std::lock_guard guard(root_mutex_);
    const auto lock_fd = open_lock_file(root_ / kRootLockName);
    FileLock lock(lock_fd.get());
    auto users = read_users();
    auto it = std::find_if(users.begin(), users.end(), [&](const auto& u) { return u.username == user.username; });
    if (it != users.end()) {
      *it = user;
    } else {
      users.push_back(user);
    }
    std::sort(users.begin(), users.end(), [](const auto& a, const auto& b) { return a.username < b.username; });
    Json arr = Json::array();
    for (const auto& u : users) {
      arr.push_back(Json{{"username", u.username}, {"password_hash", u.password_hash}, {"role", to_string(u.role)}});
    }
    write_file_atomic(root_ / kUsersName, Json{{"users", arr}}.dump() + "\n", options_.sync);
  }

  std::optional<UserRecord> get_user(std::string_view username) const override {
    for (auto& u : read_users()) {
      if (u.username == username) return std::move(u);
    }
    return std::nullopt;
  }

  std::vector<UserRecord> list_users() const override { return read_users(); }

 private:
  struct OpenJournal {
    Fd fd;
    std::uint64_t known_size = 0;
    std::uint64_t next_record_id = 1;
    std::uint64_t next_comment_id = 1;
  };

  struct PartitionSlot {
    mutable std::shared_mutex mutex;
    Fd lock_fd;
    std::map<std::uint64_t, OpenJournal> open;
  };

  fs::path partition_dir(std::string_view partition) const { return root_ / std::string(partition); }
  fs::path run_path(std::string_view partition, std::uint64_t n) const {
    return partition_dir(partition) / (run_stem(n) + ".xml");
  }
  fs::path journal_path(std::string_view partition, std::uint64_t n) const {
    return partition_dir(partition) / (run_stem(n) + ".journal");
  }

  static Error unknown_run(std::string_view partition, std::uint64_t n) {
    return Error(ErrorCode::UnknownRun, "unknown run " + std::string(partition) + "/" + std::to_string(n));
  }

  std::vector<std::string> read_meta() const {
    const auto text = read_file(root_ / kFileMetaName);
    if (!text) throw Error(ErrorCode::NotARepository, "missing " + std::string(kFileMetaName));
    const auto j = Json::parse(*text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.value("format", "") != kFormatName) {
      throw Error(ErrorCode::NotARepository, "unrecognized " + std::string(kFileMetaName));
    }
    if (j.value("version", 0) != kRepositoryVersion) {
      throw Error(ErrorCode::RepositoryVersionMismatch,
                  "repository version " + j.value("version", Json()).dump() + " is not supported");
    }
    return j.at("partitions").get<std::vector<std::string>>();
  }

  void write_meta(std::vector<std::string> partitions) {
    std::sort(partitions.begin(), partitions.end());
    const Json j{{"format", kFormatName}, {"version", kRepositoryVersion}, {"partitions", partitions}};
    write_file_atomic(root_ / kFileMetaName, j.dump(2) + "\n", options_.sync);
  }

  PartitionSlot* find_slot(std::string_view partition) const {
    std::lock_guard guard(root_mutex_);
    auto it = slots_.find(partition);
    if (it != slots_.end()) return it->second.get();
    if (!valid_partition_name(partition)) return nullptr;
    std::error_code ec;
    if (!fs::is_directory(partition_dir(partition), ec)) return nullptr;
    auto slot = std::make_unique<PartitionSlot>();
    slot->lock_fd = open_lock_file(partition_dir(partition) / kLockName);
    return slots_.emplace(std::string(partition), std::move(slot)).first->second.get();
  }

  PartitionSlot& ensure_partition(std::string_view partition) {
    if (auto* slot = find_slot(partition)) return *slot;
    std::lock_guard guard(root_mutex_);
    const auto lock_fd = open_lock_file(root_ / kRootLockName);
    FileLock lock(lock_fd.get());
    const auto dir = partition_dir(partition);
    std::error_code ec;
    fs::create_directories(dir / kAttachmentsDir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create partition directory " + dir.string() + ": " + ec.message());
    auto parts = read_meta();
    if (std::find(parts.begin(), parts.end(), partition) == parts.end()) {
      parts.emplace_back(partition);
      write_meta(parts);
    }
    auto it = slots_.find(partition);
    if (it == slots_.end()) {
      auto slot = std::make_unique<PartitionSlot>();
      slot->lock_fd = open_lock_file(dir / kLockName);
      it = slots_.emplace(std::string(partition), std::move(slot)).first;
    }
    return *it->second;
  }

  // Returns the cached journal of an open run, refreshed against the file on
  // disk; nullptr when the run is not open. Caller holds the partition lock.
  OpenJournal* open_journal(PartitionSlot& slot, std::string_view partition, std::uint64_t run_number) {
    auto it = slot.open.find(run_number);
    for (int attempt = 0; attempt < 2; ++attempt) {
      if (it == slot.open.end()) {
        const auto path = journal_path(partition, run_number);
        Fd fd{::open(path.c_str(), O_WRONLY | O_APPEND | O_CLOEXEC)};
        if (!fd) {
          if (errno == ENOENT) return nullptr;
          io_error("cannot open " + path.string());
        }
        OpenJournal j;
        j.fd = std::move(fd);
        j.known_size = static_cast<std::uint64_t>(-1);
        it = slot.open.emplace(run_number, std::move(j)).first;
      }
      struct stat st {};
      if (::fstat(it->second.fd.get(), &st) != 0) io_error("fstat journal");
      if (st.st_nlink == 0) {
        // Closed by another process since we cached it.
        slot.open.erase(it);
        it = slot.open.end();
        continue;
      }
      if (static_cast<std::uint64_t>(st.st_size) != it->second.known_size) {
        const auto path = journal_path(partition, run_number);
        const auto data = read_file(path).value_or(std::string{});
        const auto contents = parse_journal(data, path);
        it->second.next_record_id = contents.max_record_id + 1;
        it->second.next_comment_id = contents.max_comment_id + 1;
        // Drop a torn tail left by a crashed writer so the next line starts clean.
        const auto complete = data.rfind('\n') == std::string::npos ? 0 : data.rfind('\n') + 1;
        if (complete != data.size() && ::ftruncate(it->second.fd.get(), static_cast<off_t>(complete)) != 0) {
          io_error("cannot truncate " + path.string());
        }
        it->second.known_size = complete;
      }
      return &it->second;
    }
    return nullptr;
  }

  void write_journal_line(OpenJournal& j, const Json& record, std::string_view partition, std::uint64_t run_number) {
    const auto line = record.dump() + "\n";
    write_all(j.fd.get(), line, journal_path(partition, run_number));
    if (options_.sync == SyncMode::Durable) ::fdatasync(j.fd.get());
    j.known_size += line.size();
  }

  template <typename MakeLine>
  std::uint64_t append_record(std::string_view partition, std::uint64_t run_number, MakeLine&& make_line) {
    auto* slot = find_slot(partition);
    if (!slot) throw unknown_run(partition, run_number);
    std::unique_lock guard(slot->mutex);
    FileLock lock(slot->lock_fd.get());
    auto* open = open_journal(*slot, partition, run_number);
    if (!open) {
      std::error_code ec;
      if (fs::exists(run_path(partition, run_number), ec)) {
        throw Error(ErrorCode::RunClosed,
                    "run " + std::string(partition) + "/" + std::to_string(run_number) + " is closed");
      }
      throw unknown_run(partition, run_number);
    }
    const auto id = open->next_record_id;
    write_journal_line(*open, make_line(id), partition, run_number);
    ++open->next_record_id;
    return id;
  }

  template <typename Mutate>
  RunHeader close_run(std::string_view partition, std::uint64_t run_number, Mutate&& mutate) {
    auto* slot = find_slot(partition);
    if (!slot) throw unknown_run(partition, run_number);
    std::unique_lock guard(slot->mutex);
    FileLock lock(slot->lock_fd.get());
    const auto path = run_path(partition, run_number);
    const auto doc = read_file(path);
    if (!doc) throw unknown_run(partition, run_number);
    auto detail = run_from_xml(*doc, path.string());
    const auto jpath = journal_path(partition, run_number);
    const auto journal = read_file(jpath);
    if (detail.header.status != RunStatus::Open || !journal) {
      throw Error(ErrorCode::NotOpen, "run " + std::string(partition) + "/" + std::to_string(run_number) +
                                          " is not open");
    }
    auto contents = parse_journal(*journal, jpath);
    detail.mrs = std::move(contents.mrs);
    detail.is = std::move(contents.is);
    detail.comments = std::move(contents.comments);
    mutate(detail);
    require_valid(validate_header(detail.header), "run header");

    write_file_atomic(path, run_to_xml(detail), options_.sync);
    slot->open.erase(run_number);
    if (::unlink(jpath.c_str()) != 0 && errno != ENOENT) io_error("unlink " + jpath.string());
    if (options_.sync == SyncMode::Durable) fsync_dir(partition_dir(partition));
    return detail.header;
  }

  void store_blobs(std::string_view partition, const Comment& comment, std::span<const std::string> contents) {
    const auto dir = partition_dir(partition) / kAttachmentsDir;
    std::error_code ec;
    fs::create_directories(dir, ec);
    for (std::size_t i = 0; i < contents.size(); ++i) {
      const auto& meta = comment.attachments[i];
      const auto blob = dir / meta.digest;
      if (fs::exists(blob, ec)) continue;
      write_file_atomic(dir / (meta.digest + ".json"), to_json(meta).dump() + "\n", options_.sync);
      write_file_atomic(blob, contents[i], options_.sync);
    }
  }

  std::vector<OrphanRecord> read_orphans(std::string_view partition) const {
    std::vector<OrphanRecord> out;
    const auto data = read_file(partition_dir(partition) / kOrphansName);
    if (!data) return out;
    std::size_t pos = 0;
    while (true) {
      const auto nl = data->find('\n', pos);
      if (nl == std::string::npos) break;
      const auto line = std::string_view(*data).substr(pos, nl - pos);
      pos = nl + 1;
      if (line.empty()) continue;
      out.push_back(orphan_from_json(partition, Json::parse(line)));
    }
    return out;
  }

  std::vector<UserRecord> read_users() const {
    std::vector<UserRecord> out;
    const auto text = read_file(root_ / kUsersName);
    if (!text) return out;
    const auto j = Json::parse(*text);
    for (const auto& u : j.at("users")) {
      const auto role = parse_role(u.at("role").get<std::string>());
      out.push_back(UserRecord{u.at("username").get<std::string>(), u.at("password_hash").get<std::string>(),
                               role.value_or(Role::Reader)});
    }
    return out;
  }

  // Removes journals left behind by a crash: a journal without its run
  // document (begin_run interrupted) or next to a closed document (fold
  // completed, unlink interrupted).
  void recover() {
    for (const auto& p : read_meta()) {
      std::error_code ec;
      const auto dir = partition_dir(p);
      if (!fs::is_directory(dir, ec)) continue;
      std::vector<fs::path> stale;
      for (const auto& entry : fs::directory_iterator(dir, ec)) {
        const auto name = entry.path().filename().string();
        if (name.size() > 4 && name.substr(name.size() - 4) == ".tmp") {
          stale.push_back(entry.path());
          continue;
        }
        const auto j = parse_run_file(name, ".journal");
        if (!j) continue;
        const auto prefix = read_header_prefix(run_path(p, *j));
        if (!prefix || header_from_xml(*prefix, run_path(p, *j).string()).status != RunStatus::Open) {
          stale.push_back(entry.path());
        }
      }
      for (const auto& s : stale) fs::remove(s, ec);
    }
  }

  fs::path root_;
  RepositoryOptions options_;
  mutable std::mutex root_mutex_;
  mutable std::map<std::string, std::unique_ptr<PartitionSlot>, std::less<>> slots_;
};

}  // namespace

std::unique_ptr<Repository> create_file_store(const std::filesystem::path& root, RepositoryOptions options) {
  auto store = std::make_unique<FileStore>(root, options);
  store->initialize_new();
  return store;
}

std::unique_ptr<Repository> open_file_store(const std::filesystem::path& root, RepositoryOptions options) {
  auto store = std::make_unique<FileStore>(root, options);
  store->open_existing();
  return store;
}

}  // namespace obk::storage_detail
