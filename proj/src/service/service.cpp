#include "obk/service.hpp"

#include <httplib.h>

#include <charconv>
#include <condition_variable>
#include <mutex>
#include <shared_mutex>
#include <thread>

#include "obk/acquisition_server.hpp"
#include "obk/digest.hpp"
#include "obk/error.hpp"
#include "obk/query.hpp"

namespace obk {
namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
  std::string field;
};

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedJson:
    case ErrorCode::UnknownKind:
    case ErrorCode::VersionMismatch:
    case ErrorCode::PayloadSchemaError:
    case ErrorCode::InvalidCriteria:
    case ErrorCode::InvalidValue:
    case ErrorCode::TypeMismatch: return 400;
    case ErrorCode::PermissionDenied: return 403;
    case ErrorCode::UnknownRun:
    case ErrorCode::UnknownAttachment:
    case ErrorCode::NotARepository: return 404;
    case ErrorCode::AlreadyExists:
    case ErrorCode::DuplicateRun:
    case ErrorCode::AlreadyOpen:
    case ErrorCode::NotOpen:
    case ErrorCode::RunClosed:
    case ErrorCode::ReadOnly:
    case ErrorCode::RepositoryVersionMismatch: return 409;
    case ErrorCode::DigestMismatch: return 422;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const HttpError& e) {
  Json body{{"error", e.code}, {"message", e.message}, {"field", e.field}};
  if (e.status == 401) res.set_header("WWW-Authenticate", "Bearer");
  send_json(res, e.status, body);
}

HttpError from_error(const Error& e) {
  return HttpError{status_for(e.code()), std::string(to_string(e.code())), e.what(), e.field()};
}

std::optional<std::uint64_t> parse_u64(std::string_view text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc{} || res.ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

Json parse_body_object(const httplib::Request& req) {
  const auto j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw HttpError{400, "MalformedJson", "request body must be a JSON object", ""};
  }
  return j;
}

std::string string_field(const Json& j, const char* name, bool required) {
  const auto it = j.find(name);
  if (it == j.end()) {
    if (required) throw HttpError{400, "InvalidValue", std::string("missing field '") + name + "'", name};
    return {};
  }
  if (!it->is_string()) throw HttpError{400, "InvalidValue", std::string("field '") + name + "' must be a string", name};
  return it->get<std::string>();
}

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const auto* a : allowed) known = known || key == a;
    if (!known) throw HttpError{400, "InvalidValue", "unknown field '" + key + "'", key};
  }
}

std::string quoted_filename(std::string_view name) {
  std::string out;
  for (const char c : name) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

RunsQuery parse_runs_query(const std::vector<std::pair<std::string, std::string>>& params) {
  RunsQuery q;
  std::set<std::string> seen;
  auto invalid = [](const std::string& field, const std::string& why) {
    throw Error(ErrorCode::InvalidCriteria, "parameter '" + field + "': " + why, field);
  };
  auto time_param = [&](const std::string& key, const std::string& value) {
    const auto t = parse_timestamp(value);
    if (!t) invalid(key, "expected YYYY-MM-DDTHH:MM:SS.mmmZ");
    return *t;
  };
  for (const auto& [key, value] : params) {
    if (!seen.insert(key).second) invalid(key, "given more than once");
    if (key == "status") {
      const auto s = parse_run_status(value);
      if (!s || *s == RunStatus::Open) invalid(key, "expected Good or Bad");
      q.criteria.status = s;
    } else if (key == "beam_type") {
      if (value.empty() || !valid_text(value)) invalid(key, "expected a non-empty beam type");
      q.criteria.beam_type = value;
    } else if (key == "trigger_type") {
      const auto t = TriggerType::from_label(value);
      if (!t) invalid(key, "expected a trigger type label");
      q.criteria.trigger_type = t;
    } else if (key == "max_events") {
      const auto v = parse_u64(value);
      if (!v || *v > kMaxCount) invalid(key, "expected a non-negative integer");
      q.criteria.max_events_at_most = v;
    } else if (key == "start_from") {
      q.criteria.start_from = time_param(key, value);
    } else if (key == "start_to") {
      q.criteria.start_to = time_param(key, value);
    } else if (key == "sort") {
      const auto k = parse_sort_key(value);
      if (!k) invalid(key, "expected run_number, start_time or num_events");
      q.criteria.sort_key = *k;
    } else if (key == "dir") {
      const auto d = parse_sort_dir(value);
      if (!d) invalid(key, "expected asc or desc");
      q.criteria.sort_dir = *d;
    } else if (key == "include_open") {
      if (value != "true" && value != "false") invalid(key, "expected true or false");
      q.include_open = value == "true";
    } else {
      invalid(key, "unknown parameter");
    }
  }
  if (const auto v = validate_criteria(q.criteria); !v.empty()) {
    invalid(v.front(), v.front() == "start_from" ? "start_from is after start_to" : "invalid value");
  }
  return q;
}

Json run_detail_to_json(const RunDetail& d) {
  Json mrs = Json::array();
  for (const auto& m : d.mrs) mrs.push_back(Json{{"record_id", m.record_id}, {"message", to_json(m.message)}});
  Json is = Json::array();
  for (const auto& i : d.is) is.push_back(Json{{"record_id", i.record_id}, {"info", to_json(i.info)}});
  Json comments = Json::array();
  for (const auto& c : d.comments) comments.push_back(to_json(c));
  return Json{{"header", to_json(d.header)}, {"mrs", mrs}, {"is", is}, {"comments", comments}};
}

struct Service::Impl {
  Impl(ServiceConfig c, std::shared_ptr<Repository> r)
      : config(std::move(c)), auth(config.password_hash), sessions(config.token_ttl), repo(std::move(r)) {}

  ServiceConfig config;
  Authenticator auth;
  SessionStore sessions;
  mutable std::shared_mutex repo_mutex;
  std::shared_ptr<Repository> repo;
  httplib::Server server;
  std::thread thread;
  std::uint16_t port = 0;
  std::mutex state_mutex;
  std::condition_variable stopped_cv;
  bool stopped = false;

  std::shared_ptr<Repository> current() const {
    std::shared_lock guard(repo_mutex);
    return repo;
  }

  // The authenticated user, if any; a supplied but invalid token is an error.
  std::optional<UserRecord> caller(const httplib::Request& req, const Repository& r) {
    const auto header = req.get_header_value("Authorization");
    if (header.empty()) return std::nullopt;
    constexpr std::string_view prefix = "Bearer ";
    if (header.size() <= prefix.size() || header.compare(0, prefix.size(), prefix) != 0) {
      throw HttpError{401, "Unauthorized", "expected a bearer token", "Authorization"};
    }
    const auto username = sessions.lookup(std::string_view(header).substr(prefix.size()));
    auto user = username ? r.get_user(*username) : std::nullopt;
    if (!user) throw HttpError{401, "Unauthorized", "invalid or expired token", "Authorization"};
    return user;
  }

  UserRecord require_role(const httplib::Request& req, const Repository& r, Role need) {
    auto user = caller(req, r);
    if (!user) throw HttpError{401, "Unauthorized", "authentication required", "Authorization"};
    if (!role_at_least(user->role, need)) {
      throw HttpError{403, "PermissionDenied", "requires role " + std::string(to_string(need)), ""};
    }
    return *user;
  }

  void require_read(const httplib::Request& req, const Repository& r) {
    const auto user = caller(req, r);
    if (!user && !config.anonymous_read) {
      throw HttpError{401, "Unauthorized", "authentication required", "Authorization"};
    }
  }

  template <typename F>
  httplib::Server::Handler wrap(F f) {
    return [this, f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const HttpError& e) {
        send_error(res, e);
      } catch (const Error& e) {
        send_error(res, from_error(e));
      } catch (const std::exception& e) {
        send_error(res, HttpError{500, "Io", e.what(), ""});
      }
    };
  }

  void routes() {
    server.set_payload_max_length(config.max_upload_bytes);

    server.Get("/api/v1/partitions", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto r = current();
      require_read(req, *r);
      send_json(res, 200, Json{{"partitions", r->list_partitions()}});
    }));

    server.Get("/api/v1/runs", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto r = current();
      require_read(req, *r);
      const std::vector<std::pair<std::string, std::string>> params(req.params.begin(), req.params.end());
      const auto q = parse_runs_query(params);
      Json runs = Json::array();
      for (const auto& h : find_runs(*r, q.criteria, q.include_open)) runs.push_back(to_json(h));
      send_json(res, 200, Json{{"runs", runs}});
    }));

    server.Get(R"(/api/v1/runs/([^/]+)/([0-9]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto r = current();
      require_read(req, *r);
      const std::string partition = req.matches[1];
      const auto run = parse_u64(req.matches[2].str());
      if (!run || !valid_partition_name(partition)) {
        throw HttpError{404, "UnknownRun", "unknown run " + partition + "/" + req.matches[2].str(), ""};
      }
      send_json(res, 200, run_detail_to_json(get_run(*r, partition, *run)));
    }));

    server.Post(R"(/api/v1/runs/([^/]+)/([0-9]+)/comments)",
                wrap([this](const httplib::Request& req, httplib::Response& res) { post_comment(req, res); }));

    server.Get(R"(/api/v1/attachments/([^/]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto r = current();
      require_read(req, *r);
      const std::string digest = req.matches[1];
      const auto blob = valid_digest(digest) ? r->get_attachment(digest) : std::nullopt;
      if (!blob) throw HttpError{404, "UnknownAttachment", "no attachment with digest " + digest, "digest"};
      const bool inline_ok = config.inline_types.count(blob->meta.media_type) > 0;
      res.status = 200;
      res.set_header("Content-Disposition", std::string(inline_ok ? "inline" : "attachment") + "; filename=\"" +
                                                quoted_filename(blob->meta.filename) + "\"");
      res.set_header("X-Content-Type-Options", "nosniff");
      res.set_header("ETag", "\"" + digest + "\"");
      res.set_content(blob->content, blob->meta.media_type);
    }));

    server.Post("/api/v1/auth/login", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body_object(req);
      reject_unknown_keys(body, {"username", "password"});
      const auto username = string_field(body, "username", true);
      const auto password = string_field(body, "password", true);
      const auto r = current();
      const auto user = auth.authenticate(*r, username, password);
      if (!user) throw HttpError{401, "Unauthorized", "invalid username or password", ""};
      const auto session = sessions.issue(user->username);
      send_json(res, 200,
                Json{{"token", session.token},
                     {"username", user->username},
                     {"role", to_string(user->role)},
                     {"expires_at", format_timestamp(session.expires_at)}});
    }));

    server.Post("/api/v1/admin/users", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto r = current();
      require_role(req, *r, Role::Admin);
      const auto body = parse_body_object(req);
      reject_unknown_keys(body, {"username", "password", "role"});
      const auto username = string_field(body, "username", true);
      if (!valid_username(username)) throw HttpError{400, "InvalidValue", "invalid username", "username"};
      const auto password = string_field(body, "password", false);
      const auto role_text = string_field(body, "role", false);
      std::optional<Role> role;
      if (body.contains("role")) {
        role = parse_role(role_text);
        if (!role) throw HttpError{400, "InvalidValue", "role must be Reader, Writer or Admin", "role"};
      }
      if (body.contains("password") && password.empty()) {
        throw HttpError{400, "InvalidValue", "password must not be empty", "password"};
      }
      auto existing = r->get_user(username);
      const bool created = !existing;
      if (created) {
        if (password.empty()) throw HttpError{400, "InvalidValue", "new users need a password", "password"};
        existing = UserRecord{username, {}, Role::Reader};
      }
      if (!password.empty()) existing->password_hash = hash_password(password, config.password_hash);
      if (role) existing->role = *role;
      r->put_user(*existing);
      if (!created && !password.empty()) sessions.revoke_user(username);
      send_json(res, created ? 201 : 200,
                Json{{"username", existing->username}, {"role", to_string(existing->role)}, {"created", created}});
    }));

    server.Post("/api/v1/admin/repositories", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto r = current();
      require_role(req, *r, Role::Admin);
      const auto body = parse_body_object(req);
      reject_unknown_keys(body, {"backend", "root", "activate"});
      const auto backend = parse_backend_id(string_field(body, "backend", true));
      if (!backend) throw HttpError{400, "InvalidValue", "backend must be file or relational", "backend"};
      const auto root = string_field(body, "root", true);
      if (root.empty()) throw HttpError{400, "InvalidValue", "root must not be empty", "root"};
      bool activate = false;
      if (body.contains("activate")) {
        if (!body.at("activate").is_boolean()) throw HttpError{400, "InvalidValue", "activate must be a boolean", "activate"};
        activate = body.at("activate").get<bool>();
      }
      std::shared_ptr<Repository> created = create_repository(*backend, root, RepositoryOptions{true, config.sync});
      if (activate) {
        for (const auto& u : r->list_users()) created->put_user(u);
        std::unique_lock guard(repo_mutex);
        repo = created;
      }
      send_json(res, 201,
                Json{{"backend", to_string(*backend)}, {"root", created->root().string()}, {"active", activate}});
    }));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      const std::string code = res.status == 404 ? "NotFound" : res.status == 413 ? "PayloadTooLarge" : "HttpError";
      send_error(res, HttpError{res.status, code, httplib::status_message(res.status), ""});
    });
  }

  void post_comment(const httplib::Request& req, httplib::Response& res) {
    const auto r = current();
    const auto user = require_role(req, *r, Role::Writer);
    const std::string partition = req.matches[1];
    const auto run = parse_u64(req.matches[2].str());
    const auto header = run && valid_partition_name(partition) ? r->find_run_header(partition, *run) : std::nullopt;
    if (!header) throw HttpError{404, "UnknownRun", "unknown run " + partition + "/" + req.matches[2].str(), ""};
    if (!req.is_multipart_form_data()) {
      throw HttpError{400, "InvalidValue", "expected multipart/form-data", "Content-Type"};
    }

    Comment c;
    c.author = user.username;
    c.created_at = now_utc();
    c.origin = CommentOrigin::Web;
    std::vector<std::string> contents;
    std::set<std::string> singletons;
    for (const auto& [name, part] : req.files) {
      if (name == "files" || name == "file") {
        if (part.filename.empty()) continue;
        Attachment a;
        a.filename = part.filename;
        a.media_type = part.content_type.empty() ? "application/octet-stream" : part.content_type;
        if (!valid_filename(a.filename)) throw HttpError{400, "InvalidValue", "invalid file name", "files"};
        if (!valid_media_type(a.media_type)) throw HttpError{400, "InvalidValue", "invalid media type", "files"};
        a.size_bytes = part.content.size();
        a.digest = sha256_hex(part.content);
        c.attachments.push_back(std::move(a));
        contents.push_back(part.content);
        continue;
      }
      if (!singletons.insert(name).second) {
        throw HttpError{400, "InvalidValue", "field '" + name + "' given more than once", name};
      }
      if (name == "text") {
        c.text = part.content;
      } else if (name == "author") {
        if (part.content != user.username) {
          throw HttpError{403, "PermissionDenied", "author must be the authenticated user", "author"};
        }
      } else if (name == "origin") {
        if (part.content == "auto") {
          c.origin = origin_for_run_state(header->status);
        } else if (const auto o = parse_comment_origin(part.content)) {
          c.origin = *o;
        } else {
          throw HttpError{400, "InvalidValue", "origin must be Online, Offline, Web or auto", "origin"};
        }
      } else {
        throw HttpError{400, "InvalidValue", "unknown field '" + name + "'", name};
      }
    }
    if (c.text.empty() && c.attachments.empty()) {
      throw HttpError{422, "InvalidValue", "comment needs text or at least one file", "text"};
    }
    if (!valid_text(c.text)) throw HttpError{400, "InvalidValue", "text contains characters that cannot be stored", "text"};
    c.comment_id = r->append_comment(partition, *run, c, contents);
    send_json(res, 201, Json{{"comment_id", c.comment_id}, {"comment", to_json(c)}});
  }
};

Service::Service(ServiceConfig config, std::shared_ptr<Repository> repo)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(repo))) {
  impl_->routes();
}

Service::~Service() { stop(); }

void Service::start() {
  const auto [host, port] = parse_host_port(impl_->config.listen);
  const auto bind_host = host.empty() ? std::string("0.0.0.0") : host;
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(bind_host);
  } else if (!impl_->server.bind_to_port(bind_host, port)) {
    bound = -1;
  }
  if (bound <= 0) throw Error(ErrorCode::Io, "cannot listen on " + impl_->config.listen);
  impl_->port = static_cast<std::uint16_t>(bound);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  std::lock_guard guard(impl_->state_mutex);
  impl_->stopped = true;
  impl_->stopped_cv.notify_all();
}

void Service::wait() {
  std::unique_lock guard(impl_->state_mutex);
  impl_->stopped_cv.wait(guard, [this] { return impl_->stopped; });
}

std::uint16_t Service::port() const { return impl_->port; }

std::shared_ptr<Repository> Service::repository() const { return impl_->current(); }

std::uint64_t post_comment_online(const std::string& server, const std::string& token, const OnlineComment& comment) {
  httplib::Client client(server);
  client.set_connection_timeout(10);
  client.set_read_timeout(60);
  if (!token.empty()) client.set_bearer_token_auth(token);
  httplib::MultipartFormDataItems items;
  items.push_back({"text", comment.text, "", ""});
  items.push_back({"origin", comment.origin, "", ""});
  if (comment.author) items.push_back({"author", *comment.author, "", ""});
  for (const auto& f : comment.files) items.push_back({"files", f.content, f.filename, f.media_type});
  const auto path = "/api/v1/runs/" + comment.partition + "/" + std::to_string(comment.run_number) + "/comments";
  const auto res = client.Post(path, items);
  if (!res) throw Error(ErrorCode::Io, "cannot reach " + server + ": " + httplib::to_string(res.error()));
  const auto body = Json::parse(res->body, nullptr, false);
  if (res->status != 201) {
    std::string code = "Io";
    std::string message = "HTTP " + std::to_string(res->status);
    if (body.is_object()) {
      code = body.value("error", code);
      message = body.value("message", message);
    }
    if (code == "Unauthorized") code = "PermissionDenied";
    ErrorCode ec = ErrorCode::Io;
    for (int i = 0; i <= static_cast<int>(ErrorCode::Io); ++i) {
      if (to_string(static_cast<ErrorCode>(i)) == code) ec = static_cast<ErrorCode>(i);
    }
    throw Error(ec, message);
  }
  return body.at("comment_id").get<std::uint64_t>();
}

}  // namespace obk
