#include <fstream>

#include "obk/error.hpp"
#include "obk/ingest.hpp"

namespace obk {
namespace {

std::set<std::string> string_set(const Json& j, const char* field) {
  if (!j.is_array()) throw Error(ErrorCode::InvalidValue, std::string(field) + " must be an array", field);
  std::set<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw Error(ErrorCode::InvalidValue, std::string(field) + " entries must be strings", field);
    out.insert(v.get<std::string>());
  }
  return out;
}

}  // namespace

bool filter_accepts(const SubscriptionFilter& f, const MessageEnvelope& e) {
  if (f.partitions && !f.partitions->count(e.partition)) return false;
  if (!f.kinds.count(e.kind)) return false;
  if (const auto* m = std::get_if<MrsMessage>(&e.payload); m && f.min_severity) {
    if (static_cast<int>(m->severity) < static_cast<int>(*f.min_severity)) return false;
  }
  if (const auto* i = std::get_if<IsInfo>(&e.payload); i && f.is_servers) {
    if (!f.is_servers->count(i->server)) return false;
  }
  return true;
}

SubscriptionFilter filter_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidValue, "filter must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "partitions" && key != "kinds" && key != "min_severity" && key != "is_servers") {
      throw Error(ErrorCode::InvalidValue, "unknown filter key '" + key + "'", key);
    }
  }
  SubscriptionFilter f;
  if (j.contains("partitions")) {
    const auto& p = j.at("partitions");
    if (!(p.is_string() && p.get<std::string>() == "*")) f.partitions = string_set(p, "partitions");
  }
  if (j.contains("kinds")) {
    f.kinds.clear();
    for (const auto& name : string_set(j.at("kinds"), "kinds")) {
      const auto k = parse_envelope_kind(name);
      if (!k) throw Error(ErrorCode::InvalidValue, "unknown kind '" + name + "'", "kinds");
      f.kinds.insert(*k);
    }
    if (f.kinds.empty()) throw Error(ErrorCode::InvalidValue, "kinds must not be empty", "kinds");
  }
  if (j.contains("min_severity")) {
    const auto& s = j.at("min_severity");
    const auto sev = s.is_string() ? parse_severity(s.get<std::string>()) : std::nullopt;
    if (!sev) throw Error(ErrorCode::InvalidValue, "invalid min_severity", "min_severity");
    f.min_severity = sev;
  }
  if (j.contains("is_servers")) f.is_servers = string_set(j.at("is_servers"), "is_servers");
  return f;
}

Json to_json(const SubscriptionFilter& f) {
  Json j = Json::object();
  j["partitions"] = f.partitions ? Json(*f.partitions) : Json("*");
  Json kinds = Json::array();
  for (const auto k : f.kinds) kinds.push_back(to_string(k));
  j["kinds"] = kinds;
  if (f.min_severity) j["min_severity"] = to_string(*f.min_severity);
  if (f.is_servers) j["is_servers"] = *f.is_servers;
  return j;
}

SubscriptionFilter load_filter(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read filter file " + path.string());
  const auto j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::InvalidValue, "filter file is not valid JSON: " + path.string());
  return filter_from_json(j);
}

}  // namespace obk
