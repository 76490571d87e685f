#pragma once

// JSON-over-HTTP API under /api/v1.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "obk/auth.hpp"
#include "obk/codec.hpp"
#include "obk/storage.hpp"

namespace obk {

struct ServiceConfig {
  std::string listen = "127.0.0.1:8080";
  std::filesystem::path repository_root;
  // When set, an absent or empty root is initialized with this backend and
  // an existing repository must use it.
  std::optional<BackendId> backend;
  std::chrono::seconds token_ttl{3600};
  std::set<std::string> inline_types{"text/plain", "image/png", "image/jpeg", "application/pdf"};
  bool anonymous_read = true;
  PasswordHashParams password_hash;
  std::size_t max_upload_bytes = 64u << 20;
  SyncMode sync = SyncMode::Buffered;
};

// Keys: listen, repository_root, backend, token_ttl_seconds, inline_types,
// anonymous_read, password_hash {opslimit, memlimit_kib}, max_upload_bytes,
// sync. Relative roots resolve against `base_dir`. Throws InvalidValue.
ServiceConfig service_config_from_json(const Json& j, const std::filesystem::path& base_dir = {});
ServiceConfig load_service_config(const std::filesystem::path& path);

std::unique_ptr<Repository> open_service_repository(const ServiceConfig& config);

struct RunsQuery {
  SearchCriteria criteria;
  bool include_open = false;
};

// Decodes GET /runs parameters. Unknown, repeated or malformed parameters
// throw InvalidCriteria naming the parameter.
RunsQuery parse_runs_query(const std::vector<std::pair<std::string, std::string>>& params);

Json run_detail_to_json(const RunDetail& detail);

class Service {
 public:
  Service(ServiceConfig config, std::shared_ptr<Repository> repo);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds config.listen (port 0 picks a free port) and serves in a background thread.
  void start();
  void stop();
  // Blocks until stop().
  void wait();
  std::uint16_t port() const;

  std::shared_ptr<Repository> repository() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct UploadFile {
  std::string filename;
  std::string media_type;
  std::string content;
};

struct OnlineComment {
  std::string partition;
  std::uint64_t run_number = 0;
  std::string text;
  std::optional<std::string> author;
  std::string origin = "auto";
  std::vector<UploadFile> files;
};

// POSTs a comment to a running service ("http://host:port"). Returns the
// new comment id; failures throw Error with the code reported by the server.
std::uint64_t post_comment_online(const std::string& server, const std::string& token, const OnlineComment& comment);

}  // namespace obk
