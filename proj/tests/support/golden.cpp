#include "golden.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "obk/auth.hpp"
#include "obk/codec.hpp"
#include "obk/digest.hpp"
#include "obk/service.hpp"
#include "testing.hpp"

namespace obk::test {
namespace {

const PasswordHashParams kCheapHash{1, 8192};

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  if (from.empty()) return s;
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

struct Substitutions {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string apply(std::string s) const {
    for (const auto& [k, v] : pairs) s = replace_all(s, k, v);
    return s;
  }
  Json apply(const Json& j) const {
    if (j.is_string()) return apply(j.get<std::string>());
    if (j.is_array() || j.is_object()) {
      Json out = j;
      for (auto& [k, v] : out.items()) v = apply(v);
      return out;
    }
    return j;
  }
};

bool is_hex(const std::string& s, std::size_t n) {
  return s.size() == n && std::all_of(s.begin(), s.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)) && !std::isupper(static_cast<unsigned char>(c)); });
}

// Empty string on match, else a description of the first difference.
std::string match_json(const Json& want, const Json& got, const std::string& path) {
  if (want.is_string()) {
    const auto w = want.get<std::string>();
    if (w == "<any>") return {};
    if (w == "<timestamp>") {
      return got.is_string() && parse_timestamp(got.get<std::string>()) ? "" : path + ": expected a timestamp";
    }
    if (w == "<token>") {
      return got.is_string() && is_hex(got.get<std::string>(), 32) ? "" : path + ": expected a token";
    }
  }
  if (want.type() != got.type() && !(want.is_number() && got.is_number())) {
    return path + ": expected " + want.dump() + ", got " + got.dump();
  }
  if (want.is_object()) {
    for (const auto& [k, v] : want.items()) {
      if (!got.contains(k)) return path + "." + k + ": missing";
      if (auto d = match_json(v, got.at(k), path + "." + k); !d.empty()) return d;
    }
    for (const auto& [k, v] : got.items()) {
      if (!want.contains(k)) return path + "." + k + ": unexpected";
    }
    return {};
  }
  if (want.is_array()) {
    if (want.size() != got.size()) {
      return path + ": expected " + std::to_string(want.size()) + " elements, got " + std::to_string(got.size());
    }
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (auto d = match_json(want[i], got[i], path + "[" + std::to_string(i) + "]"); !d.empty()) return d;
    }
    return {};
  }
  return want == got ? "" : path + ": expected " + want.dump() + ", got " + got.dump();
}

Json normalize(const Json& j, const std::string& key, const Substitutions& reverse) {
  if (j.is_object()) {
    Json out = Json::object();
    for (const auto& [k, v] : j.items()) out[k] = normalize(v, k, reverse);
    return out;
  }
  if (j.is_array()) {
    Json out = Json::array();
    for (const auto& v : j) out.push_back(normalize(v, key, reverse));
    return out;
  }
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (key == "token") return "<token>";
    if (key == "expires_at") return "<timestamp>";
    if (key == "created_at" && s.rfind("20", 0) == 0 && s.substr(0, 4) >= "2020") return "<timestamp>";
    return reverse.apply(s);
  }
  return j;
}

Json read_json_file(const std::filesystem::path& p) {
  std::ifstream f(p);
  return Json::parse(f);
}

httplib::Result send(httplib::Client& client, const Json& request, const Substitutions& subs) {
  const auto method = request.at("method").get<std::string>();
  const auto path = subs.apply(request.at("path").get<std::string>());
  httplib::Headers headers;
  if (request.contains("headers")) {
    for (const auto& [k, v] : request.at("headers").items()) headers.emplace(k, subs.apply(v.get<std::string>()));
  }
  if (method == "GET") return client.Get(path, headers);
  if (method != "POST") throw std::runtime_error("unsupported method " + method);
  if (request.contains("json")) {
    return client.Post(path, headers, subs.apply(request.at("json")).dump(), "application/json");
  }
  if (request.contains("multipart")) {
    httplib::MultipartFormDataItems items;
    for (const auto& part : request.at("multipart")) {
      items.push_back(httplib::MultipartFormData{part.at("name").get<std::string>(),
                                                 subs.apply(part.value("content", std::string())),
                                                 part.value("filename", std::string()),
                                                 part.value("content_type", std::string())});
    }
    return client.Post(path, headers, items);
  }
  return client.Post(path, headers, subs.apply(request.value("body", std::string())),
                     request.value("content_type", std::string("text/plain")));
}

}  // namespace

std::vector<GoldenCase> run_golden_fixtures(const std::filesystem::path& fixture_dir, BackendId backend,
                                            bool regenerate) {
  TempDir tmp;
  const auto root = tmp / "repo";
  std::shared_ptr<Repository> repo = create_repository(backend, root);
  build_fixture_repository(*repo);
  const std::vector<std::tuple<std::string, std::string, Role>> users{
      {"admin", "admin-pass", Role::Admin}, {"writer", "writer-pass", Role::Writer}, {"reader", "reader-pass", Role::Reader}};
  for (const auto& [name, password, role] : users) {
    repo->put_user(UserRecord{name, hash_password(password, kCheapHash), role});
  }

  ServiceConfig config;
  config.listen = "127.0.0.1:0";
  config.repository_root = root;
  config.password_hash = kCheapHash;
  Service service(config, repo);
  service.start();
  httplib::Client client("127.0.0.1", service.port());
  client.set_read_timeout(30, 0);

  Substitutions subs;
  subs.pairs.emplace_back("{{tmp}}", tmp.path().string());
  for (const auto& [name, password, role] : users) {
    auto res = client.Post("/api/v1/auth/login", Json{{"username", name}, {"password", password}}.dump(),
                           "application/json");
    if (!res || res->status != 200) throw std::runtime_error("fixture login failed for " + name);
    subs.pairs.emplace_back("{{token:" + name + "}}", Json::parse(res->body).at("token").get<std::string>());
  }
  Substitutions reverse;
  reverse.pairs.emplace_back(tmp.path().string(), "{{tmp}}");

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(fixture_dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<GoldenCase> results;
  for (const auto& file : files) {
    GoldenCase gc;
    gc.name = file.stem().string();
    try {
      auto fixture = read_json_file(file);
      const auto res = send(client, fixture.at("request"), subs);
      if (!res) throw std::runtime_error("request failed: " + httplib::to_string(res.error()));

      if (regenerate) {
        Json response{{"status", res->status}};
        Json headers = Json::object();
        std::vector<std::string> names;
        if (fixture.contains("response") && fixture["response"].contains("headers")) {
          for (const auto& [k, _] : fixture["response"]["headers"].items()) names.push_back(k);
        } else {
          names.push_back("Content-Type");
          if (res->has_header("WWW-Authenticate")) names.push_back("WWW-Authenticate");
        }
        for (const auto& n : names) headers[n] = reverse.apply(res->get_header_value(n));
        response["headers"] = headers;
        const auto type = res->get_header_value("Content-Type");
        if (type == "application/json") {
          response["json"] = normalize(Json::parse(res->body), "", reverse);
        } else if (type.rfind("text/", 0) == 0) {
          response["body"] = res->body;
        } else {
          response["body_base64"] = base64_encode(res->body);
        }
        fixture["response"] = response;
        std::ofstream(file) << fixture.dump(2) << '\n';
        gc.passed = true;
        results.push_back(gc);
        continue;
      }

      const auto& want = fixture.at("response");
      std::string diff;
      if (res->status != want.at("status").get<int>()) {
        diff = "status " + std::to_string(res->status) + ", expected " + std::to_string(want.at("status").get<int>());
      }
      if (diff.empty() && want.contains("headers")) {
        for (const auto& [k, v] : want.at("headers").items()) {
          const auto expected = subs.apply(v.get<std::string>());
          if (res->get_header_value(k) != expected) {
            diff = "header " + k + ": '" + res->get_header_value(k) + "', expected '" + expected + "'";
            break;
          }
        }
      }
      if (diff.empty() && want.contains("json")) {
        Json got;
        try {
          got = Json::parse(res->body);
        } catch (const std::exception&) {
          diff = "body is not JSON: " + res->body.substr(0, 200);
        }
        if (diff.empty()) diff = match_json(subs.apply(want.at("json")), got, "$");
      }
      if (diff.empty() && want.contains("body") && res->body != want.at("body").get<std::string>()) {
        diff = "body differs";
      }
      if (diff.empty() && want.contains("body_base64") &&
          res->body != base64_decode(want.at("body_base64").get<std::string>())) {
        diff = "binary body differs";
      }
      gc.passed = diff.empty();
      gc.detail = diff;
    } catch (const std::exception& e) {
      gc.detail = e.what();
    }
    results.push_back(gc);
  }
  service.stop();
  return results;
}

}  // namespace obk::test
