#include <algorithm>
#include <system_error>
#include <tuple>

#include "common.hpp"
#include "obk/digest.hpp"

namespace obk {

std::string_view to_string(BackendId id) {
  return id == BackendId::FileStore ? "FileStore" : "RelationalStore";
}

std::optional<BackendId> parse_backend_id(std::string_view text) {
  if (text == "file" || text == "FileStore") return BackendId::FileStore;
  if (text == "relational" || text == "RelationalStore") return BackendId::RelationalStore;
  return std::nullopt;
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Reader: return "Reader";
    case Role::Writer: return "Writer";
    case Role::Admin: return "Admin";
  }
  return "Reader";
}

std::optional<Role> parse_role(std::string_view text) {
  if (text == "Reader") return Role::Reader;
  if (text == "Writer") return Role::Writer;
  if (text == "Admin") return Role::Admin;
  return std::nullopt;
}

Timestamp orphan_timestamp(const OrphanBody& body) {
  return std::visit(
      [](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, Comment>) {
          return b.created_at;
        } else {
          return b.timestamp;
        }
      },
      body);
}

EnvelopeKind orphan_kind(const OrphanBody& body) {
  switch (body.index()) {
    case 0: return EnvelopeKind::MRS;
    case 1: return EnvelopeKind::IS;
    default: return EnvelopeKind::COMMENT;
  }
}

CommentOrigin origin_for_run_state(RunStatus status) {
  return status == RunStatus::Open ? CommentOrigin::Online : CommentOrigin::Offline;
}

std::vector<RunHeader> Repository::select_runs(const SearchCriteria& criteria, bool include_open) const {
  std::vector<RunHeader> out;
  for (auto& h : list_run_headers()) {
    if (criteria_match(criteria, h, include_open)) {
      out.push_back(std::move(h));
    }
  }
  std::sort(out.begin(), out.end(),
            [&](const RunHeader& a, const RunHeader& b) { return criteria_order_before(criteria, a, b); });
  return out;
}

std::vector<IsOccurrence> Repository::scan_is_attribute(std::optional<std::string_view> partition,
                                                        std::string_view class_name,
                                                        std::string_view parameter_name) const {
  std::vector<IsOccurrence> out;
  for (const auto& h : list_run_headers(partition)) {
    const auto detail = get_run_detail(h.partition, h.run_number);
    for (const auto& rec : detail.is) {
      if (rec.info.class_name != class_name) continue;
      if (const auto* attr = rec.info.find(parameter_name)) {
        out.push_back(IsOccurrence{h.partition, h.run_number, rec.record_id, rec.info.object_name, rec.info.timestamp,
                                   attr->value});
      }
    }
  }
  return out;
}

std::optional<BackendId> detect_backend(const std::filesystem::path& root) {
  std::error_code ec;
  if (std::filesystem::is_regular_file(root / storage_detail::kFileMetaName, ec)) return BackendId::FileStore;
  if (std::filesystem::is_regular_file(root / storage_detail::kRelationalDbName, ec)) return BackendId::RelationalStore;
  return std::nullopt;
}

std::unique_ptr<Repository> create_repository(BackendId backend, const std::filesystem::path& root,
                                              RepositoryOptions options) {
  storage_detail::prepare_new_root(root);
  if (backend == BackendId::FileStore) {
    return storage_detail::create_file_store(root, options);
  }
  return storage_detail::create_relational_store(root, options);
}

std::unique_ptr<Repository> open_repository(const std::filesystem::path& root, RepositoryOptions options) {
  const auto backend = detect_backend(root);
  if (!backend) {
    throw Error(ErrorCode::NotARepository, "no repository found at " + root.string());
  }
  if (*backend == BackendId::FileStore) {
    return storage_detail::open_file_store(root, options);
  }
  return storage_detail::open_relational_store(root, options);
}

namespace storage_detail {

void require_valid(const std::vector<std::string>& violations, std::string_view what) {
  if (violations.empty()) return;
  std::string msg = "invalid " + std::string(what) + ":";
  for (const auto& v : violations) msg += " " + v;
  const auto code = std::find(violations.begin(), violations.end(), "end-before-start") != violations.end()
                        ? ErrorCode::EndBeforeStart
                        : ErrorCode::InvalidValue;
  throw Error(code, msg, violations.front());
}

void verify_attachments(const Comment& comment, std::span<const std::string> contents) {
  if (contents.size() != comment.attachments.size()) {
    throw Error(ErrorCode::InvalidValue, "attachment count does not match the number of blobs", "attachments");
  }
  for (std::size_t i = 0; i < contents.size(); ++i) {
    const auto& meta = comment.attachments[i];
    if (meta.size_bytes != contents[i].size()) {
      throw Error(ErrorCode::DigestMismatch, "attachment '" + meta.filename + "' size does not match its content",
                  "attachments.size_bytes");
    }
    if (sha256_hex(contents[i]) != meta.digest) {
      throw Error(ErrorCode::DigestMismatch, "attachment '" + meta.filename + "' digest does not match its content",
                  "attachments.digest");
    }
  }
}

void prepare_new_root(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (fs::exists(root, ec)) {
    if (!fs::is_directory(root, ec) || !fs::is_empty(root, ec)) {
      throw Error(ErrorCode::AlreadyExists, "repository root is not empty: " + root.string());
    }
    return;
  }
  fs::create_directories(root, ec);
  if (ec) {
    const auto code = ec == std::errc::permission_denied ? ErrorCode::PermissionDenied : ErrorCode::Io;
    throw Error(code, "cannot create repository root " + root.string() + ": " + ec.message());
  }
}

void require_writable(const Repository& repo) {
  if (!repo.writable()) {
    throw Error(ErrorCode::ReadOnly, "repository was opened read-only");
  }
}

void sort_detail(RunDetail& detail) {
  std::stable_sort(detail.mrs.begin(), detail.mrs.end(), [](const StoredMrs& a, const StoredMrs& b) {
    return std::tie(a.message.timestamp, a.record_id) < std::tie(b.message.timestamp, b.record_id);
  });
  std::stable_sort(detail.is.begin(), detail.is.end(), [](const StoredIs& a, const StoredIs& b) {
    return std::tie(a.info.timestamp, a.record_id) < std::tie(b.info.timestamp, b.record_id);
  });
  std::stable_sort(detail.comments.begin(), detail.comments.end(),
                   [](const Comment& a, const Comment& b) { return a.comment_id < b.comment_id; });
}

}  // namespace storage_detail
}  // namespace obk
