#include <fstream>

#include "obk/error.hpp"
#include "obk/service.hpp"

namespace obk {
namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::InvalidValue, "config " + field + ": " + why, field);
}

std::uint64_t positive(const Json& j, const std::string& field) {
  if (!j.is_number_unsigned() || j.get<std::uint64_t>() == 0) bad(field, "expected a positive integer");
  return j.get<std::uint64_t>();
}

}  // namespace

ServiceConfig service_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) bad("", "expected a JSON object");
  ServiceConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "listen") {
      if (!value.is_string()) bad(key, "expected host:port");
      c.listen = value.get<std::string>();
    } else if (key == "repository_root") {
      if (!value.is_string() || value.get<std::string>().empty()) bad(key, "expected a path");
      c.repository_root = value.get<std::string>();
      if (c.repository_root.is_relative() && !base_dir.empty()) c.repository_root = base_dir / c.repository_root;
    } else if (key == "backend") {
      c.backend = value.is_string() ? parse_backend_id(value.get<std::string>()) : std::nullopt;
      if (!c.backend) bad(key, "expected file or relational");
    } else if (key == "token_ttl_seconds") {
      c.token_ttl = std::chrono::seconds(positive(value, key));
    } else if (key == "inline_types") {
      if (!value.is_array()) bad(key, "expected an array of media types");
      c.inline_types.clear();
      for (const auto& t : value) {
        if (!t.is_string() || !valid_media_type(t.get<std::string>())) bad(key, "invalid media type");
        c.inline_types.insert(t.get<std::string>());
      }
    } else if (key == "anonymous_read") {
      if (!value.is_boolean()) bad(key, "expected true or false");
      c.anonymous_read = value.get<bool>();
    } else if (key == "password_hash") {
      if (!value.is_object()) bad(key, "expected {opslimit, memlimit_kib}");
      for (const auto& [k, v] : value.items()) {
        if (k == "opslimit") {
          c.password_hash.opslimit = positive(v, "password_hash.opslimit");
        } else if (k == "memlimit_kib") {
          c.password_hash.memlimit_bytes = positive(v, "password_hash.memlimit_kib") * 1024;
        } else {
          bad("password_hash." + k, "unknown key");
        }
      }
    } else if (key == "max_upload_bytes") {
      c.max_upload_bytes = positive(value, key);
    } else if (key == "sync") {
      const auto s = value.is_string() ? value.get<std::string>() : std::string{};
      if (s == "buffered") {
        c.sync = SyncMode::Buffered;
      } else if (s == "durable") {
        c.sync = SyncMode::Durable;
      } else {
        bad(key, "expected buffered or durable");
      }
    } else {
      bad(key, "unknown key");
    }
  }
  if (c.repository_root.empty()) bad("repository_root", "missing");
  return c;
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read config file " + path.string());
  const auto j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::InvalidValue, "config file is not valid JSON: " + path.string());
  return service_config_from_json(j, path.parent_path());
}

std::unique_ptr<Repository> open_service_repository(const ServiceConfig& config) {
  namespace fs = std::filesystem;
  const RepositoryOptions options{true, config.sync};
  std::error_code ec;
  const bool empty = !fs::exists(config.repository_root, ec) ||
                     (fs::is_directory(config.repository_root, ec) && fs::is_empty(config.repository_root, ec));
  if (empty && config.backend) return create_repository(*config.backend, config.repository_root, options);
  auto repo = open_repository(config.repository_root, options);
  if (config.backend && repo->backend() != *config.backend) {
    throw Error(ErrorCode::InvalidValue,
                "repository at " + config.repository_root.string() + " is a " + std::string(to_string(repo->backend())),
                "backend");
  }
  return repo;
}

}  // namespace obk
