// SQLite-backed repository. One connection per store, serialized by a mutex;
// every public operation is a single transaction.

#include <sqlite3.h>

#include <algorithm>
#include <limits>
#include <map>
#include <mutex>

#include "common.hpp"
#include "obk/codec.hpp"
#include "obk/relational_schema.hpp"

namespace obk::storage_detail {
namespace {

namespace fs = std::filesystem;

constexpr std::string_view kFormatName = "obk-relational";

std::int64_t to_i64(std::uint64_t v) {
  return static_cast<std::int64_t>(std::min<std::uint64_t>(v, static_cast<std::uint64_t>(INT64_MAX)));
}

class Statement {
 public:
  Statement(sqlite3* db, sqlite3_stmt* stmt) : db_(db), stmt_(stmt) {}
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;
  ~Statement() {
    sqlite3_reset(stmt_);
    sqlite3_clear_bindings(stmt_);
  }

  Statement& bind(int idx, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_, idx, v));
    return *this;
  }
  Statement& bind(int idx, std::uint64_t v) { return bind(idx, to_i64(v)); }
  Statement& bind(int idx, int v) { return bind(idx, static_cast<std::int64_t>(v)); }
  Statement& bind(int idx, double v) {
    check(sqlite3_bind_double(stmt_, idx, v));
    return *this;
  }
  Statement& bind(int idx, std::string_view v) {
    check(sqlite3_bind_text(stmt_, idx, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }
  Statement& bind(int idx, const std::string& v) { return bind(idx, std::string_view(v)); }
  Statement& bind(int idx, const char* v) { return bind(idx, std::string_view(v)); }
  Statement& bind(int idx, Timestamp t) { return bind(idx, to_epoch_ms(t)); }
  Statement& bind_null(int idx) {
    check(sqlite3_bind_null(stmt_, idx));
    return *this;
  }
  Statement& bind_blob(int idx, std::string_view v) {
    check(sqlite3_bind_blob(stmt_, idx, v.data(), static_cast<int>(v.size()), SQLITE_TRANSIENT));
    return *this;
  }

  // True while a row is available.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    check(rc);
    return false;
  }
  void run() {
    while (step()) {
    }
  }

  bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
  std::int64_t i64(int col) const { return sqlite3_column_int64(stmt_, col); }
  std::uint64_t u64(int col) const { return static_cast<std::uint64_t>(sqlite3_column_int64(stmt_, col)); }
  std::string text(int col) const {
    const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
    return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string{};
  }
  std::string blob(int col) const {
    const auto* p = static_cast<const char*>(sqlite3_column_blob(stmt_, col));
    return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string{};
  }
  Timestamp time(int col) const { return from_epoch_ms(i64(col)); }

 private:
  void check(int rc) const {
    if (rc == SQLITE_OK) return;
    const auto code = (rc & 0xff) == SQLITE_READONLY ? ErrorCode::ReadOnly : ErrorCode::Io;
    throw Error(code, std::string("sqlite: ") + sqlite3_errmsg(db_));
  }

  sqlite3* db_;
  sqlite3_stmt* stmt_;
};

constexpr const char* kHeaderColumns =
    "partition, run_number, start_time, end_time, status, num_events, max_events, trigger_type, beam_type, "
    "detector_mask";

RunHeader header_from_row(const Statement& s, int first = 0) {
  RunHeader h;
  h.partition = s.text(first);
  h.run_number = s.u64(first + 1);
  h.start_time = s.time(first + 2);
  if (!s.is_null(first + 3)) h.end_time = s.time(first + 3);
  h.status = parse_run_status(s.text(first + 4)).value_or(RunStatus::Bad);
  h.num_events = s.u64(first + 5);
  h.max_events = s.u64(first + 6);
  h.trigger_type = TriggerType::from_label(s.text(first + 7)).value_or(TriggerType{});
  h.beam_type = s.text(first + 8);
  h.detector_mask = DetectorMask{static_cast<std::uint32_t>(s.i64(first + 9))};
  return h;
}

class RelationalStore final : public Repository {
 public:
  RelationalStore(fs::path root, RepositoryOptions options) : root_(std::move(root)), options_(options) {}

  ~RelationalStore() override {
    for (auto& [sql, stmt] : cache_) sqlite3_finalize(stmt);
    if (db_) sqlite3_close(db_);
  }

  template <typename F>
  auto transaction(F&& body) {
    std::lock_guard guard(mutex_);
    exec("BEGIN IMMEDIATE");
    try {
      if constexpr (std::is_void_v<decltype(body())>) {
        body();
        exec("COMMIT");
      } else {
        auto result = body();
        exec("COMMIT");
        return result;
      }
    } catch (...) {
      exec_noexcept("ROLLBACK");
      throw;
    }
  }

  void connect(bool create) {
    const auto path = root_ / kRelationalDbName;
    int flags = SQLITE_OPEN_FULLMUTEX;
    flags |= options_.writable ? SQLITE_OPEN_READWRITE : SQLITE_OPEN_READONLY;
    if (create) flags |= SQLITE_OPEN_CREATE;
    if (sqlite3_open_v2(path.c_str(), &db_, flags, nullptr) != SQLITE_OK) {
      const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
      throw Error(ErrorCode::Io, "cannot open " + path.string() + ": " + msg);
    }
    sqlite3_busy_timeout(db_, 10000);
    exec("PRAGMA foreign_keys = ON");
    if (options_.writable) {
      exec("PRAGMA journal_mode = WAL");
      exec(options_.sync == SyncMode::Durable ? "PRAGMA synchronous = FULL" : "PRAGMA synchronous = NORMAL");
    }
    if (create) {
      exec("BEGIN IMMEDIATE");
      try {
        exec(kRelationalSchemaSql);
        for (const auto& [key, value] : {std::pair<std::string, std::string>{"format", std::string(kFormatName)},
                                         {"version", std::to_string(kRepositoryVersion)}}) {
          auto s = prepare("INSERT INTO obk_meta(key, value) VALUES (?, ?)");
          s.bind(1, key).bind(2, value).run();
        }
        exec("COMMIT");
      } catch (...) {
        exec_noexcept("ROLLBACK");
        throw;
      }
    } else {
      check_meta();
    }
  }

  BackendId backend() const override { return BackendId::RelationalStore; }
  const fs::path& root() const override { return root_; }
  bool writable() const override { return options_.writable; }

  std::vector<std::string> list_partitions() const override {
    std::lock_guard guard(mutex_);
    std::vector<std::string> out;
    auto s = prepare("SELECT name FROM partitions ORDER BY name");
    while (s.step()) out.push_back(s.text(0));
    return out;
  }

  void begin_run(const RunHeader& header) override {
    require_writable(*this);
    require_valid(validate_header(header), "run header");
    if (header.status != RunStatus::Open) {
      throw Error(ErrorCode::InvalidValue, "begin_run needs an Open header", "status");
    }
    transaction([&] {
      if (find_run_row(header.partition, header.run_number)) {
        throw Error(ErrorCode::DuplicateRun, "run " + header.partition + "/" + std::to_string(header.run_number) +
                                                 " already exists");
      }
      if (const auto open = open_run_locked(header.partition)) {
        throw Error(ErrorCode::AlreadyOpen,
                    "partition " + header.partition + " already has open run " + std::to_string(*open));
      }
      ensure_partition(header.partition);
      auto s = prepare(
          "INSERT INTO runs(partition, run_number, start_time, end_time, status, num_events, max_events, "
          "trigger_type, beam_type, detector_mask) VALUES (?, ?, ?, NULL, 'Open', ?, ?, ?, ?, ?)");
      s.bind(1, header.partition)
          .bind(2, header.run_number)
          .bind(3, header.start_time)
          .bind(4, header.num_events)
          .bind(5, header.max_events)
          .bind(6, header.trigger_type.label())
          .bind(7, header.beam_type)
          .bind(8, static_cast<std::int64_t>(header.detector_mask.bits))
          .run();
    });
  }

  RunHeader end_run(std::string_view partition, std::uint64_t run_number, RunStatus status,
                    std::uint64_t num_events, Timestamp end_time) override {
    require_writable(*this);
    if (status == RunStatus::Open) {
      throw Error(ErrorCode::InvalidValue, "end_run status must be Good or Bad", "status");
    }
    return transaction([&] {
      auto [id, header] = require_open(partition, run_number);
      header.status = status;
      header.num_events = num_events;
      header.end_time = end_time;
      require_valid(validate_header(header), "run header");
      store_close(id, header);
      return header;
    });
  }

  RunHeader force_close(std::string_view partition, std::uint64_t run_number) override {
    require_writable(*this);
    return transaction([&] {
      auto [id, header] = require_open(partition, run_number);
      auto s = prepare(
          "SELECT MAX(t) FROM (SELECT MAX(timestamp) AS t FROM mrs_messages WHERE run_id = ?1 "
          "UNION ALL SELECT MAX(timestamp) FROM is_objects WHERE run_id = ?1 "
          "UNION ALL SELECT MAX(created_at) FROM comments WHERE run_id = ?1)");
      s.bind(1, id);
      auto end = header.start_time;
      if (s.step() && !s.is_null(0)) end = std::max(end, s.time(0));
      header.status = RunStatus::Bad;
      header.end_time = end;
      store_close(id, header);
      return header;
    });
  }

  std::uint64_t append_mrs(std::string_view partition, std::uint64_t run_number, const MrsMessage& m) override {
    require_writable(*this);
    require_valid(validate_mrs(m), "MRS message");
    return transaction([&] {
      const auto [run_id, record_id] = next_record(partition, run_number);
      auto s = prepare(
          "INSERT INTO mrs_messages(run_id, record_id, timestamp, message_name, severity, application, text, "
          "qualifiers) VALUES (?, ?, ?, ?, ?, ?, ?, ?)");
      s.bind(1, run_id)
          .bind(2, record_id)
          .bind(3, m.timestamp)
          .bind(4, m.message_name)
          .bind(5, to_string(m.severity))
          .bind(6, m.application)
          .bind(7, m.text)
          .bind(8, Json(m.qualifiers).dump())
          .run();
      return record_id;
    });
  }

  std::uint64_t append_is(std::string_view partition, std::uint64_t run_number, const IsInfo& info) override {
    require_writable(*this);
    require_valid(validate_is_info(info), "IS information");
    return transaction([&] {
      const auto [run_id, record_id] = next_record(partition, run_number);
      auto s = prepare(
          "INSERT INTO is_objects(run_id, record_id, timestamp, server, object_name, class_name) "
          "VALUES (?, ?, ?, ?, ?, ?)");
      s.bind(1, run_id)
          .bind(2, record_id)
          .bind(3, info.timestamp)
          .bind(4, info.server)
          .bind(5, info.object_name)
          .bind(6, info.class_name)
          .run();
      const std::int64_t object_id = sqlite3_last_insert_rowid(db_);
      for (std::size_t i = 0; i < info.attributes.size(); ++i) {
        const auto& a = info.attributes[i];
        auto ins = prepare(
            "INSERT INTO is_attributes(object_id, position, name, type, int_value, float_value, value_text) "
            "VALUES (?, ?, ?, ?, ?, ?, ?)");
        ins.bind(1, object_id).bind(2, static_cast<std::int64_t>(i)).bind(3, a.name).bind(4, scalar_type_name(a.value));
        ins.bind_null(5).bind_null(6);
        std::visit(
            [&](const auto& v) {
              using T = std::decay_t<decltype(v)>;
              if constexpr (std::is_same_v<T, std::int64_t>) {
                ins.bind(5, v);
              } else if constexpr (std::is_same_v<T, bool>) {
                ins.bind(5, static_cast<std::int64_t>(v));
              } else if constexpr (std::is_same_v<T, Timestamp>) {
                ins.bind(5, v);
              } else if constexpr (std::is_same_v<T, double>) {
                ins.bind(6, v);
              }
            },
            a.value);
        ins.bind(7, scalar_to_text(a.value)).run();
      }
      return record_id;
    });
  }

  std::uint64_t append_comment(std::string_view partition, std::uint64_t run_number, const Comment& comment,
                               std::span<const std::string> contents) override {
    require_writable(*this);
    require_valid(validate_comment(comment), "comment");
    verify_attachments(comment, contents);
    return transaction([&] {
      const auto row = find_run_row(partition, run_number);
      if (!row) throw unknown_run(partition, run_number);
      auto next = prepare("SELECT next_comment_id FROM runs WHERE id = ?");
      next.bind(1, row->first);
      next.step();
      const auto comment_id = next.u64(0);
      auto bump = prepare("UPDATE runs SET next_comment_id = next_comment_id + 1 WHERE id = ?");
      bump.bind(1, row->first).run();
      store_blobs(comment, contents);
      auto s = prepare(
          "INSERT INTO comments(run_id, comment_id, author, created_at, origin, text) VALUES (?, ?, ?, ?, ?, ?)");
      s.bind(1, row->first)
          .bind(2, comment_id)
          .bind(3, comment.author)
          .bind(4, comment.created_at)
          .bind(5, to_string(comment.origin))
          .bind(6, comment.text)
          .run();
      const std::int64_t comment_row = sqlite3_last_insert_rowid(db_);
      for (std::size_t i = 0; i < comment.attachments.size(); ++i) {
        const auto& a = comment.attachments[i];
        auto ins = prepare(
            "INSERT INTO attachments(comment_row, position, filename, media_type, size_bytes, digest) "
            "VALUES (?, ?, ?, ?, ?, ?)");
        ins.bind(1, comment_row)
            .bind(2, static_cast<std::int64_t>(i))
            .bind(3, a.filename)
            .bind(4, a.media_type)
            .bind(5, a.size_bytes)
            .bind(6, a.digest)
            .run();
      }
      return comment_id;
    });
  }

  std::uint64_t append_orphan(std::string_view partition, const OrphanBody& body,
                              std::span<const std::string> contents) override {
    require_writable(*this);
    if (!valid_partition_name(partition)) {
      throw Error(ErrorCode::InvalidValue, "invalid partition name", "partition");
    }
    OrphanBody stored = body;
    std::visit(
        [&](auto& b) {
          using T = std::decay_t<decltype(b)>;
          if constexpr (std::is_same_v<T, MrsMessage>) {
            require_valid(validate_mrs(b), "MRS message");
          } else if constexpr (std::is_same_v<T, IsInfo>) {
            require_valid(validate_is_info(b), "IS information");
          } else {
            require_valid(validate_comment(b), "comment");
            verify_attachments(b, contents);
            b.comment_id = 0;
          }
        },
        stored);
    return transaction([&] {
      ensure_partition(partition);
      if (const auto* c = std::get_if<Comment>(&stored)) store_blobs(*c, contents);
      auto next = prepare("SELECT COALESCE(MAX(orphan_id), 0) + 1 FROM orphan_records WHERE partition = ?");
      next.bind(1, partition);
      next.step();
      const auto orphan_id = next.u64(0);
      auto s = prepare(
          "INSERT INTO orphan_records(partition, orphan_id, kind, timestamp, body) VALUES (?, ?, ?, ?, ?)");
      s.bind(1, partition)
          .bind(2, orphan_id)
          .bind(3, to_string(orphan_kind(stored)))
          .bind(4, orphan_timestamp(stored))
          .bind(5, std::visit([](const auto& b) { return to_json(b).dump(); }, stored))
          .run();
      return orphan_id;
    });
  }

  std::optional<std::uint64_t> open_run(std::string_view partition) const override {
    std::lock_guard guard(mutex_);
    return open_run_locked(partition);
  }

  std::optional<RunHeader> find_run_header(std::string_view partition, std::uint64_t run_number) const override {
    std::lock_guard guard(mutex_);
    auto s = prepare(std::string("SELECT ") + kHeaderColumns + " FROM runs WHERE partition = ? AND run_number = ?");
    s.bind(1, partition).bind(2, run_number);
    if (!s.step()) return std::nullopt;
    return header_from_row(s);
  }

  std::vector<RunHeader> list_run_headers(std::optional<std::string_view> partition) const override {
    std::lock_guard guard(mutex_);
    std::vector<RunHeader> out;
    if (partition) {
      auto s = prepare(std::string("SELECT ") + kHeaderColumns +
                       " FROM runs WHERE partition = ? ORDER BY run_number");
      s.bind(1, *partition);
      while (s.step()) out.push_back(header_from_row(s));
    } else {
      auto s = prepare(std::string("SELECT ") + kHeaderColumns + " FROM runs ORDER BY partition, run_number");
      while (s.step()) out.push_back(header_from_row(s));
    }
    return out;
  }

  std::vector<std::uint64_t> list_run_numbers(std::string_view partition) const override {
    std::lock_guard guard(mutex_);
    std::vector<std::uint64_t> out;
    auto s = prepare("SELECT run_number FROM runs WHERE partition = ? ORDER BY run_number");
    s.bind(1, partition);
    while (s.step()) out.push_back(s.u64(0));
    return out;
  }

  RunDetail get_run_detail(std::string_view partition, std::uint64_t run_number) const override {
    std::lock_guard guard(mutex_);
    ReadTransaction tx(*this);
    RunDetail d;
    std::int64_t run_id = 0;
    {
      auto s = prepare(std::string("SELECT id, ") + kHeaderColumns +
                       " FROM runs WHERE partition = ? AND run_number = ?");
      s.bind(1, partition).bind(2, run_number);
      if (!s.step()) throw unknown_run(partition, run_number);
      run_id = s.i64(0);
      d.header = header_from_row(s, 1);
    }
    {
      auto s = prepare(
          "SELECT record_id, timestamp, message_name, severity, application, text, qualifiers "
          "FROM mrs_messages WHERE run_id = ? ORDER BY timestamp, record_id");
      s.bind(1, run_id);
      while (s.step()) {
        StoredMrs r;
        r.record_id = s.u64(0);
        r.message.timestamp = s.time(1);
        r.message.message_name = s.text(2);
        r.message.severity = parse_severity(s.text(3)).value_or(Severity::Information);
        r.message.application = s.text(4);
        r.message.text = s.text(5);
        r.message.qualifiers = Json::parse(s.text(6)).get<std::vector<std::string>>();
        d.mrs.push_back(std::move(r));
      }
    }
    {
      std::map<std::int64_t, std::size_t> index;
      auto s = prepare(
          "SELECT id, record_id, timestamp, server, object_name, class_name FROM is_objects "
          "WHERE run_id = ? ORDER BY timestamp, record_id");
      s.bind(1, run_id);
      while (s.step()) {
        StoredIs r;
        r.record_id = s.u64(1);
        r.info.timestamp = s.time(2);
        r.info.server = s.text(3);
        r.info.object_name = s.text(4);
        r.info.class_name = s.text(5);
        index[s.i64(0)] = d.is.size();
        d.is.push_back(std::move(r));
      }
      auto a = prepare(
          "SELECT a.object_id, a.name, a.type, a.value_text FROM is_attributes a "
          "JOIN is_objects o ON o.id = a.object_id WHERE o.run_id = ? ORDER BY a.object_id, a.position");
      a.bind(1, run_id);
      while (a.step()) {
        auto& info = d.is[index.at(a.i64(0))].info;
        info.attributes.push_back(IsAttribute{a.text(1), scalar_from_text(a.text(2), a.text(3))});
      }
    }
    {
      std::map<std::int64_t, std::size_t> index;
      auto s = prepare(
          "SELECT id, comment_id, author, created_at, origin, text FROM comments WHERE run_id = ? "
          "ORDER BY comment_id");
      s.bind(1, run_id);
      while (s.step()) {
        Comment c;
        c.comment_id = s.u64(1);
        c.author = s.text(2);
        c.created_at = s.time(3);
        c.origin = parse_comment_origin(s.text(4)).value_or(CommentOrigin::Web);
        c.text = s.text(5);
        index[s.i64(0)] = d.comments.size();
        d.comments.push_back(std::move(c));
      }
      auto a = prepare(
          "SELECT a.comment_row, a.filename, a.media_type, a.size_bytes, a.digest FROM attachments a "
          "JOIN comments c ON c.id = a.comment_row WHERE c.run_id = ? ORDER BY a.comment_row, a.position");
      a.bind(1, run_id);
      while (a.step()) {
        d.comments[index.at(a.i64(0))].attachments.push_back(
            Attachment{a.text(1), a.text(2), a.u64(3), a.text(4)});
      }
    }
    return d;
  }

  std::vector<OrphanRecord> list_orphans(std::string_view partition) const override {
    std::lock_guard guard(mutex_);
    std::vector<OrphanRecord> out;
    auto s = prepare("SELECT orphan_id, kind, body FROM orphan_records WHERE partition = ? ORDER BY orphan_id");
    s.bind(1, partition);
    while (s.step()) {
      OrphanRecord o;
      o.partition = std::string(partition);
      o.orphan_id = s.u64(0);
      const auto kind = s.text(1);
      const auto body = Json::parse(s.text(2));
      if (kind == "MRS") {
        o.body = mrs_from_json(body);
      } else if (kind == "IS") {
        o.body = is_info_from_json(body);
      } else {
        o.body = comment_from_json(body);
      }
      out.push_back(std::move(o));
    }
    return out;
  }

  std::optional<StoredAttachment> get_attachment(std::string_view digest) const override {
    std::lock_guard guard(mutex_);
    auto s = prepare("SELECT filename, media_type, size_bytes, content FROM blobs WHERE digest = ?");
    s.bind(1, digest);
    if (!s.step()) return std::nullopt;
    return StoredAttachment{Attachment{s.text(0), s.text(1), s.u64(2), std::string(digest)}, s.blob(3)};
  }

  std::vector<RunHeader> select_runs(const SearchCriteria& c, bool include_open) const override {
    std::string sql = std::string("SELECT ") + kHeaderColumns + " FROM runs WHERE 1";
    if (c.status) {
      sql += " AND status = :status";
    } else if (!include_open) {
      sql += " AND status <> 'Open'";
    }
    if (c.max_events_at_most) sql += " AND max_events <= :max_events";
    if (c.start_from) sql += " AND start_time >= :start_from";
    if (c.start_to) sql += " AND start_time <= :start_to";
    if (c.beam_type) sql += " AND beam_type = :beam COLLATE NOCASE";
    if (c.trigger_type) sql += " AND trigger_type = :trigger";
    const char* dir = c.sort_dir == SortDir::Asc ? " ASC" : " DESC";
    switch (c.sort_key) {
      case SortKey::RunNumber: sql += std::string(" ORDER BY run_number") + dir; break;
      case SortKey::StartTime: sql += std::string(" ORDER BY start_time") + dir; break;
      case SortKey::NumEvents: sql += std::string(" ORDER BY num_events") + dir; break;
    }
    sql += ", partition ASC, run_number ASC";

    std::lock_guard guard(mutex_);
    auto s = prepare(sql);
    auto bind_named = [&](const char* name, auto value) {
      const int idx = sqlite3_bind_parameter_index(raw(sql), name);
      if (idx > 0) s.bind(idx, value);
    };
    if (c.status) bind_named(":status", std::string(to_string(*c.status)));
    if (c.max_events_at_most) bind_named(":max_events", *c.max_events_at_most);
    if (c.start_from) bind_named(":start_from", *c.start_from);
    if (c.start_to) bind_named(":start_to", *c.start_to);
    if (c.beam_type) bind_named(":beam", *c.beam_type);
    if (c.trigger_type) bind_named(":trigger", std::string(c.trigger_type->label()));
    std::vector<RunHeader> out;
    while (s.step()) out.push_back(header_from_row(s));
    return out;
  }

  std::vector<IsOccurrence> scan_is_attribute(std::optional<std::string_view> partition, std::string_view class_name,
                                              std::string_view parameter_name) const override {
    std::string sql =
        "SELECT r.partition, r.run_number, o.record_id, o.object_name, o.timestamp, a.type, a.value_text "
        "FROM is_objects o JOIN is_attributes a ON a.object_id = o.id JOIN runs r ON r.id = o.run_id "
        "WHERE o.class_name = ?1 AND a.name = ?2";
    if (partition) sql += " AND r.partition = ?3";
    std::lock_guard guard(mutex_);
    auto s = prepare(sql);
    s.bind(1, class_name).bind(2, parameter_name);
    if (partition) s.bind(3, *partition);
    std::vector<IsOccurrence> out;
    while (s.step()) {
      out.push_back(IsOccurrence{s.text(0), s.u64(1), s.u64(2), s.text(3), s.time(4),
                                 scalar_from_text(s.text(5), s.text(6))});
    }
    return out;
  }

  void put_user(const UserRecord& user) override {
    require_writable(*this);
    transaction([&] {
      auto s = prepare(
          "INSERT INTO users(username, password_hash, role) VALUES (?, ?, ?) "
          "ON CONFLICT(username) DO UPDATE SET password_hash = excluded.password_hash, role = excluded.role");
      s.bind(1, user.username).bind(2, user.password_hash).bind(3, to_string(user.role)).run();
    });
  }

  std::optional<UserRecord> get_user(std::string_view username) const override {
    std::lock_guard guard(mutex_);
    auto s = prepare("SELECT username, password_hash, role FROM users WHERE username = ?");
    s.bind(1, username);
    if (!s.step()) return std::nullopt;
    return UserRecord{s.text(0), s.text(1), parse_role(s.text(2)).value_or(Role::Reader)};
  }

  std::vector<UserRecord> list_users() const override {
    std::lock_guard guard(mutex_);
    std::vector<UserRecord> out;
    auto s = prepare("SELECT username, password_hash, role FROM users ORDER BY username");
    while (s.step()) out.push_back(UserRecord{s.text(0), s.text(1), parse_role(s.text(2)).value_or(Role::Reader)});
    return out;
  }

 private:
  // Consistent snapshot across several SELECTs.
  class ReadTransaction {
   public:
    explicit ReadTransaction(const RelationalStore& store) : store_(store) { store_.exec("BEGIN"); }
    ~ReadTransaction() { store_.exec_noexcept("COMMIT"); }
    ReadTransaction(const ReadTransaction&) = delete;
    ReadTransaction& operator=(const ReadTransaction&) = delete;

   private:
    const RelationalStore& store_;
  };

  static Error unknown_run(std::string_view partition, std::uint64_t n) {
    return Error(ErrorCode::UnknownRun, "unknown run " + std::string(partition) + "/" + std::to_string(n));
  }

  void exec(const char* sql) const {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown error";
      sqlite3_free(err);
      const auto code = sqlite3_errcode(db_) == SQLITE_READONLY ? ErrorCode::ReadOnly : ErrorCode::Io;
      throw Error(code, "sqlite: " + msg);
    }
  }

  void exec_noexcept(const char* sql) const noexcept { sqlite3_exec(db_, sql, nullptr, nullptr, nullptr); }

  sqlite3_stmt* raw(const std::string& sql) const {
    auto it = cache_.find(sql);
    if (it != cache_.end()) return it->second;
    sqlite3_stmt* stmt = nullptr;
    if (sqlite3_prepare_v3(db_, sql.c_str(), static_cast<int>(sql.size()), SQLITE_PREPARE_PERSISTENT, &stmt,
                           nullptr) != SQLITE_OK) {
      throw Error(ErrorCode::Io, std::string("sqlite prepare: ") + sqlite3_errmsg(db_));
    }
    cache_.emplace(sql, stmt);
    return stmt;
  }

  // Statements are cached per SQL text; the wrapper resets them on scope exit.
  Statement prepare(const std::string& sql) const { return Statement(db_, raw(sql)); }

  void check_meta() {
    std::lock_guard guard(mutex_);
    std::map<std::string, std::string> meta;
    try {
      auto s = prepare("SELECT key, value FROM obk_meta");
      while (s.step()) meta[s.text(0)] = s.text(1);
    } catch (const Error&) {
      throw Error(ErrorCode::NotARepository, "database has no repository metadata");
    }
    if (meta["format"] != kFormatName) {
      throw Error(ErrorCode::NotARepository, "database is not a run repository");
    }
    if (meta["version"] != std::to_string(kRepositoryVersion)) {
      throw Error(ErrorCode::RepositoryVersionMismatch,
                  "repository version " + meta["version"] + " is not supported");
    }
  }

  void ensure_partition(std::string_view partition) {
    auto s = prepare("INSERT OR IGNORE INTO partitions(name) VALUES (?)");
    s.bind(1, partition).run();
  }

  std::optional<std::uint64_t> open_run_locked(std::string_view partition) const {
    auto s = prepare("SELECT run_number FROM runs WHERE partition = ? AND status = 'Open'");
    s.bind(1, partition);
    if (!s.step()) return std::nullopt;
    return s.u64(0);
  }

  // (row id, status)
  std::optional<std::pair<std::int64_t, RunStatus>> find_run_row(std::string_view partition,
                                                                 std::uint64_t run_number) const {
    auto s = prepare("SELECT id, status FROM runs WHERE partition = ? AND run_number = ?");
    s.bind(1, partition).bind(2, run_number);
    if (!s.step()) return std::nullopt;
    return std::pair{s.i64(0), parse_run_status(s.text(1)).value_or(RunStatus::Bad)};
  }

  std::pair<std::int64_t, RunHeader> require_open(std::string_view partition, std::uint64_t run_number) {
    auto s = prepare(std::string("SELECT id, ") + kHeaderColumns +
                     " FROM runs WHERE partition = ? AND run_number = ?");
    s.bind(1, partition).bind(2, run_number);
    if (!s.step()) throw unknown_run(partition, run_number);
    auto header = header_from_row(s, 1);
    if (header.status != RunStatus::Open) {
      throw Error(ErrorCode::NotOpen, "run " + std::string(partition) + "/" + std::to_string(run_number) +
                                          " is not open");
    }
    return {s.i64(0), std::move(header)};
  }

  void store_close(std::int64_t id, const RunHeader& h) {
    auto s = prepare("UPDATE runs SET status = ?, num_events = ?, end_time = ? WHERE id = ?");
    s.bind(1, to_string(h.status)).bind(2, h.num_events).bind(3, *h.end_time).bind(4, id).run();
  }

  // Allocates the next record id of an open run: (row id, record id).
  std::pair<std::int64_t, std::uint64_t> next_record(std::string_view partition, std::uint64_t run_number) {
    auto s = prepare("SELECT id, status, next_record_id FROM runs WHERE partition = ? AND run_number = ?");
    s.bind(1, partition).bind(2, run_number);
    if (!s.step()) throw unknown_run(partition, run_number);
    if (s.text(1) != "Open") {
      throw Error(ErrorCode::RunClosed, "run " + std::string(partition) + "/" + std::to_string(run_number) +
                                            " is closed");
    }
    const auto id = s.i64(0);
    const auto record_id = s.u64(2);
    auto bump = prepare("UPDATE runs SET next_record_id = next_record_id + 1 WHERE id = ?");
    bump.bind(1, id).run();
    return {id, record_id};
  }

  void store_blobs(const Comment& comment, std::span<const std::string> contents) {
    for (std::size_t i = 0; i < contents.size(); ++i) {
      const auto& a = comment.attachments[i];
      auto s = prepare(
          "INSERT OR IGNORE INTO blobs(digest, filename, media_type, size_bytes, content) VALUES (?, ?, ?, ?, ?)");
      s.bind(1, a.digest).bind(2, a.filename).bind(3, a.media_type).bind(4, a.size_bytes).bind_blob(5, contents[i]);
      s.run();
    }
  }

  fs::path root_;
  RepositoryOptions options_;
  sqlite3* db_ = nullptr;
  mutable std::recursive_mutex mutex_;
  mutable std::map<std::string, sqlite3_stmt*> cache_;
};

}  // namespace

std::unique_ptr<Repository> create_relational_store(const std::filesystem::path& root, RepositoryOptions options) {
  auto store = std::make_unique<RelationalStore>(root, options);
  store->connect(true);
  return store;
}

std::unique_ptr<Repository> open_relational_store(const std::filesystem::path& root, RepositoryOptions options) {
  auto store = std::make_unique<RelationalStore>(root, options);
  store->connect(false);
  return store;
}

}  // namespace obk::storage_detail
