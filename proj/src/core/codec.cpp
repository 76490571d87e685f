#include "obk/codec.hpp"

#include <charconv>
#include <cmath>
#include <initializer_list>
#include <set>

#include "obk/digest.hpp"
#include "obk/error.hpp"

namespace obk {
namespace {

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

[[noreturn]] void schema_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::PayloadSchemaError, field.empty() ? what : field + ": " + what, field);
}

void require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) {
    schema_error(path, "expected an object");
  }
}

// Every key must be in `allowed`; every key of `required` must be present.
void check_keys(const Json& j, const std::string& path, std::initializer_list<std::string_view> required,
                std::initializer_list<std::string_view> optional = {}) {
  require_object(j, path);
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto r : required) known = known || r == key;
    for (auto o : optional) known = known || o == key;
    if (!known) {
      schema_error(join(path, key), "unknown field");
    }
  }
  for (auto r : required) {
    if (!j.contains(r)) {
      schema_error(join(path, r), "missing field");
    }
  }
}

std::string get_string(const Json& j, std::string_view key, const std::string& path) {
  const auto field = join(path, key);
  const auto& v = j.at(std::string(key));
  if (!v.is_string()) {
    schema_error(field, "expected a string");
  }
  auto s = v.get<std::string>();
  if (!valid_text(s)) {
    schema_error(field, "string contains characters that cannot be stored");
  }
  return s;
}

std::string get_nonempty_string(const Json& j, std::string_view key, const std::string& path) {
  auto s = get_string(j, key, path);
  if (s.empty()) {
    schema_error(join(path, key), "must not be empty");
  }
  return s;
}

std::uint64_t get_count(const Json& j, std::string_view key, const std::string& path, std::uint64_t max = kMaxCount) {
  const auto field = join(path, key);
  const auto& v = j.at(std::string(key));
  if (!v.is_number_integer()) {
    schema_error(field, "expected a non-negative integer");
  }
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > max) schema_error(field, "out of range");
    return u;
  }
  const auto i = v.get<std::int64_t>();
  if (i < 0) schema_error(field, "expected a non-negative integer");
  if (static_cast<std::uint64_t>(i) > max) schema_error(field, "out of range");
  return static_cast<std::uint64_t>(i);
}

Timestamp timestamp_from(const Json& v, const std::string& field) {
  if (!v.is_string()) {
    schema_error(field, "expected an ISO-8601 UTC timestamp string");
  }
  const auto t = parse_timestamp(v.get_ref<const std::string&>());
  if (!t) {
    schema_error(field, "expected YYYY-MM-DDTHH:MM:SS.mmmZ");
  }
  return *t;
}

Timestamp get_timestamp(const Json& j, std::string_view key, const std::string& path) {
  return timestamp_from(j.at(std::string(key)), join(path, key));
}

TriggerType get_trigger(const Json& j, std::string_view key, const std::string& path) {
  const auto label = get_string(j, key, path);
  const auto t = TriggerType::from_label(label);
  if (!t) {
    schema_error(join(path, key), "invalid trigger type");
  }
  return *t;
}

DetectorMask get_mask(const Json& j, std::string_view key, const std::string& path) {
  const auto text = get_string(j, key, path);
  try {
    return detector_mask_parse(text);
  } catch (const Error& e) {
    schema_error(join(path, key), e.what());
  }
}

std::int64_t int_from(const Json& v, const std::string& field) {
  if (!v.is_number_integer()) schema_error(field, "expected an integer");
  if (v.is_number_unsigned() && v.get<std::uint64_t>() > kMaxCount) schema_error(field, "integer out of range");
  return v.get<std::int64_t>();
}

double float_from(const Json& v, const std::string& field) {
  if (!v.is_number()) schema_error(field, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) schema_error(field, "non-finite float");
  return d;
}

bool bool_from(const Json& v, const std::string& field) {
  if (!v.is_boolean()) schema_error(field, "expected a boolean");
  return v.get<bool>();
}

std::string str_from(const Json& v, const std::string& field) {
  if (!v.is_string()) schema_error(field, "expected a string");
  auto s = v.get<std::string>();
  if (!valid_text(s)) schema_error(field, "string contains characters that cannot be stored");
  return s;
}

template <typename T, typename F>
std::vector<T> list_from(const Json& v, const std::string& field, F&& element) {
  if (!v.is_array()) schema_error(field, "expected an array");
  std::vector<T> out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(element(v[i], field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Json list_to_json(const ScalarList& list) {
  return std::visit(
      [](const auto& items) {
        Json arr = Json::array();
        for (const auto& item : items) {
          using T = std::decay_t<decltype(item)>;
          if constexpr (std::is_same_v<T, Timestamp>) {
            arr.push_back(format_timestamp(item));
          } else {
            arr.push_back(static_cast<T>(item));
          }
        }
        return arr;
      },
      list);
}

ScalarList list_from_json(ScalarTag element, const Json& v, const std::string& field) {
  switch (element) {
    case ScalarTag::Int: return list_from<std::int64_t>(v, field, int_from);
    case ScalarTag::Float: return list_from<double>(v, field, float_from);
    case ScalarTag::Bool: return list_from<bool>(v, field, bool_from);
    case ScalarTag::Str: return list_from<std::string>(v, field, str_from);
    case ScalarTag::Time: return list_from<Timestamp>(v, field, timestamp_from);
    case ScalarTag::List: break;
  }
  schema_error(field, "nested lists are not supported");
}

std::optional<std::pair<ScalarTag, std::optional<ScalarTag>>> split_type_name(std::string_view type_name) {
  if (type_name.rfind("list:", 0) == 0) {
    const auto elem = parse_scalar_tag(type_name.substr(5));
    if (!elem || *elem == ScalarTag::List) return std::nullopt;
    return std::pair{ScalarTag::List, elem};
  }
  const auto tag = parse_scalar_tag(type_name);
  if (!tag || *tag == ScalarTag::List) return std::nullopt;
  return std::pair{*tag, std::optional<ScalarTag>{}};
}

std::string float_text(double d) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, res.ptr);
}

Json attachment_upload_to_json(const AttachmentUpload& a) {
  Json j = to_json(a.meta);
  j["content"] = base64_encode(a.content);
  return j;
}

SorPayload sor_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"run_number", "max_events", "trigger_type", "beam_type", "detector_mask"});
  SorPayload p;
  p.run_number = get_count(j, "run_number", path, kMaxRunNumber);
  if (p.run_number == 0) schema_error(join(path, "run_number"), "must be positive");
  p.max_events = get_count(j, "max_events", path);
  p.trigger_type = get_trigger(j, "trigger_type", path);
  p.beam_type = get_string(j, "beam_type", path);
  p.detector_mask = get_mask(j, "detector_mask", path);
  return p;
}

EorPayload eor_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"status", "num_events"});
  EorPayload p;
  const auto status = parse_run_status(get_string(j, "status", path));
  if (!status || *status == RunStatus::Open) schema_error(join(path, "status"), "expected Good or Bad");
  p.status = *status;
  p.num_events = get_count(j, "num_events", path);
  return p;
}

CommentPayload comment_payload_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"author", "text", "origin"}, {"attachments"});
  CommentPayload p;
  p.author = get_nonempty_string(j, "author", path);
  p.text = get_string(j, "text", path);
  const auto origin = parse_comment_origin(get_string(j, "origin", path));
  if (!origin) schema_error(join(path, "origin"), "expected Online, Offline or Web");
  p.origin = *origin;
  if (j.contains("attachments")) {
    const auto& arr = j.at("attachments");
    const auto apath = join(path, "attachments");
    if (!arr.is_array()) schema_error(apath, "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto ipath = apath + "[" + std::to_string(i) + "]";
      check_keys(arr[i], ipath, {"filename", "media_type", "size_bytes", "digest", "content"});
      Json meta = arr[i];
      meta.erase("content");
      AttachmentUpload up;
      up.meta = attachment_from_json(meta, ipath);
      try {
        up.content = base64_decode(get_string(arr[i], "content", ipath));
      } catch (const Error& e) {
        schema_error(join(ipath, "content"), e.what());
      }
      p.attachments.push_back(std::move(up));
    }
  }
  if (p.text.empty() && p.attachments.empty()) {
    schema_error(join(path, "text"), "comment needs text or at least one attachment");
  }
  return p;
}

}  // namespace

Json to_json(const RunHeader& h) {
  Json j = {
      {"partition", h.partition},
      {"run_number", h.run_number},
      {"start_time", format_timestamp(h.start_time)},
      {"status", to_string(h.status)},
      {"num_events", h.num_events},
      {"max_events", h.max_events},
      {"trigger_type", h.trigger_type.label()},
      {"beam_type", h.beam_type},
      {"detector_mask", detector_mask_format(h.detector_mask)},
  };
  j["end_time"] = h.end_time ? Json(format_timestamp(*h.end_time)) : Json(nullptr);
  return j;
}

RunHeader run_header_from_json(const Json& j, const std::string& path) {
  check_keys(j, path,
             {"partition", "run_number", "start_time", "end_time", "status", "num_events", "max_events",
              "trigger_type", "beam_type", "detector_mask"});
  RunHeader h;
  h.partition = get_string(j, "partition", path);
  h.run_number = get_count(j, "run_number", path);
  h.start_time = get_timestamp(j, "start_time", path);
  if (!j.at("end_time").is_null()) {
    h.end_time = get_timestamp(j, "end_time", path);
  }
  const auto status = parse_run_status(get_string(j, "status", path));
  if (!status) schema_error(join(path, "status"), "expected Open, Good or Bad");
  h.status = *status;
  h.num_events = get_count(j, "num_events", path);
  h.max_events = get_count(j, "max_events", path);
  h.trigger_type = get_trigger(j, "trigger_type", path);
  h.beam_type = get_string(j, "beam_type", path);
  h.detector_mask = get_mask(j, "detector_mask", path);
  if (const auto violations = validate_header(h); !violations.empty()) {
    schema_error(path, "invalid run header: " + violations.front());
  }
  return h;
}

Json to_json(const MrsMessage& m) {
  return Json{{"message_name", m.message_name}, {"severity", to_string(m.severity)},
              {"application", m.application},   {"text", m.text},
              {"timestamp", format_timestamp(m.timestamp)}, {"qualifiers", m.qualifiers}};
}

MrsMessage mrs_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"message_name", "severity", "application", "text", "timestamp"}, {"qualifiers"});
  MrsMessage m;
  m.message_name = get_nonempty_string(j, "message_name", path);
  const auto sev = parse_severity(get_string(j, "severity", path));
  if (!sev) schema_error(join(path, "severity"), "expected Information, Warning, Error or Fatal");
  m.severity = *sev;
  m.application = get_string(j, "application", path);
  m.text = get_string(j, "text", path);
  m.timestamp = get_timestamp(j, "timestamp", path);
  if (j.contains("qualifiers")) {
    m.qualifiers = list_from<std::string>(j.at("qualifiers"), join(path, "qualifiers"), str_from);
  }
  return m;
}

Json scalar_to_json(const Scalar& value) {
  return std::visit(
      [](const auto& v) -> Json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Timestamp>) {
          return format_timestamp(v);
        } else if constexpr (std::is_same_v<T, ScalarList>) {
          return list_to_json(v);
        } else {
          return v;
        }
      },
      value);
}

Scalar scalar_from_json(std::string_view type_name, const Json& v, const std::string& path) {
  const auto parts = split_type_name(type_name);
  if (!parts) schema_error(path, "unknown scalar type '" + std::string(type_name) + "'");
  switch (parts->first) {
    case ScalarTag::Int: return int_from(v, path);
    case ScalarTag::Float: return float_from(v, path);
    case ScalarTag::Bool: return bool_from(v, path);
    case ScalarTag::Str: return str_from(v, path);
    case ScalarTag::Time: return timestamp_from(v, path);
    case ScalarTag::List: return list_from_json(*parts->second, v, path);
  }
  schema_error(path, "unknown scalar type");
}

Json to_json(const IsAttribute& a) {
  return Json{{"name", a.name}, {"type", scalar_type_name(a.value)}, {"value", scalar_to_json(a.value)}};
}

Json to_json(const IsInfo& info) {
  Json attrs = Json::array();
  for (const auto& a : info.attributes) attrs.push_back(to_json(a));
  return Json{{"server", info.server},
              {"object_name", info.object_name},
              {"class_name", info.class_name},
              {"attributes", std::move(attrs)},
              {"timestamp", format_timestamp(info.timestamp)}};
}

IsInfo is_info_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"server", "object_name", "class_name", "attributes", "timestamp"});
  IsInfo info;
  info.server = get_nonempty_string(j, "server", path);
  info.object_name = get_nonempty_string(j, "object_name", path);
  info.class_name = get_nonempty_string(j, "class_name", path);
  info.timestamp = get_timestamp(j, "timestamp", path);
  const auto apath = join(path, "attributes");
  const auto& arr = j.at("attributes");
  if (!arr.is_array()) schema_error(apath, "expected an array");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto ipath = apath + "[" + std::to_string(i) + "]";
    check_keys(arr[i], ipath, {"name", "type", "value"});
    IsAttribute a;
    a.name = get_nonempty_string(arr[i], "name", ipath);
    if (!seen.insert(a.name).second) schema_error(join(ipath, "name"), "duplicate attribute name");
    const auto type = get_string(arr[i], "type", ipath);
    a.value = scalar_from_json(type, arr[i].at("value"), join(ipath, "value"));
    info.attributes.push_back(std::move(a));
  }
  return info;
}

Json to_json(const Attachment& a) {
  return Json{{"filename", a.filename}, {"media_type", a.media_type}, {"size_bytes", a.size_bytes}, {"digest", a.digest}};
}

Attachment attachment_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"filename", "media_type", "size_bytes", "digest"});
  Attachment a;
  a.filename = get_string(j, "filename", path);
  if (!valid_filename(a.filename)) schema_error(join(path, "filename"), "invalid file name");
  a.media_type = get_string(j, "media_type", path);
  if (!valid_media_type(a.media_type)) schema_error(join(path, "media_type"), "invalid media type");
  a.size_bytes = get_count(j, "size_bytes", path);
  a.digest = get_string(j, "digest", path);
  if (!valid_digest(a.digest)) schema_error(join(path, "digest"), "expected 64 lowercase hex digits");
  return a;
}

Json to_json(const Comment& c) {
  Json atts = Json::array();
  for (const auto& a : c.attachments) atts.push_back(to_json(a));
  return Json{{"comment_id", c.comment_id}, {"author", c.author},          {"created_at", format_timestamp(c.created_at)},
              {"text", c.text},             {"origin", to_string(c.origin)}, {"attachments", std::move(atts)}};
}

Comment comment_from_json(const Json& j, const std::string& path) {
  check_keys(j, path, {"comment_id", "author", "created_at", "text", "origin", "attachments"});
  Comment c;
  c.comment_id = get_count(j, "comment_id", path);
  c.author = get_nonempty_string(j, "author", path);
  c.created_at = get_timestamp(j, "created_at", path);
  c.text = get_string(j, "text", path);
  const auto origin = parse_comment_origin(get_string(j, "origin", path));
  if (!origin) schema_error(join(path, "origin"), "expected Online, Offline or Web");
  c.origin = *origin;
  const auto apath = join(path, "attachments");
  const auto& arr = j.at("attachments");
  if (!arr.is_array()) schema_error(apath, "expected an array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    c.attachments.push_back(attachment_from_json(arr[i], apath + "[" + std::to_string(i) + "]"));
  }
  return c;
}

Json to_json(const SearchCriteria& c) {
  Json j = Json::object();
  j["status"] = c.status ? Json(to_string(*c.status)) : Json(nullptr);
  j["max_events_at_most"] = c.max_events_at_most ? Json(*c.max_events_at_most) : Json(nullptr);
  j["start_from"] = c.start_from ? Json(format_timestamp(*c.start_from)) : Json(nullptr);
  j["start_to"] = c.start_to ? Json(format_timestamp(*c.start_to)) : Json(nullptr);
  j["beam_type"] = c.beam_type ? Json(*c.beam_type) : Json(nullptr);
  j["trigger_type"] = c.trigger_type ? Json(c.trigger_type->label()) : Json(nullptr);
  j["sort_key"] = to_string(c.sort_key);
  j["sort_dir"] = to_string(c.sort_dir);
  return j;
}

Json to_json(const MessageEnvelope& e) {
  Json payload = std::visit(
      [](const auto& p) -> Json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, SorPayload>) {
          return Json{{"run_number", p.run_number},
                      {"max_events", p.max_events},
                      {"trigger_type", p.trigger_type.label()},
                      {"beam_type", p.beam_type},
                      {"detector_mask", detector_mask_format(p.detector_mask)}};
        } else if constexpr (std::is_same_v<T, EorPayload>) {
          return Json{{"status", to_string(p.status)}, {"num_events", p.num_events}};
        } else if constexpr (std::is_same_v<T, CommentPayload>) {
          Json j{{"author", p.author}, {"text", p.text}, {"origin", to_string(p.origin)}};
          if (!p.attachments.empty()) {
            Json arr = Json::array();
            for (const auto& a : p.attachments) arr.push_back(attachment_upload_to_json(a));
            j["attachments"] = std::move(arr);
          }
          return j;
        } else {
          return to_json(p);
        }
      },
      e.payload);
  return Json{{"version", e.version},
              {"kind", to_string(e.kind)},
              {"partition", e.partition},
              {"seq", e.seq},
              {"timestamp", format_timestamp(e.timestamp)},
              {"payload", std::move(payload)}};
}

MessageEnvelope envelope_from_json(const Json& j) {
  if (!j.is_object()) {
    throw Error(ErrorCode::MalformedJson, "envelope must be a JSON object");
  }
  if (!j.contains("version")) schema_error("version", "missing field");
  const auto& ver = j.at("version");
  if (!ver.is_number_integer()) schema_error("version", "expected an integer");
  if (ver.get<std::int64_t>() != kEnvelopeVersion) {
    throw Error(ErrorCode::VersionMismatch, "unsupported envelope version " + ver.dump(), "version");
  }
  if (!j.contains("kind")) schema_error("kind", "missing field");
  const auto& kind_json = j.at("kind");
  const auto kind = kind_json.is_string() ? parse_envelope_kind(kind_json.get_ref<const std::string&>()) : std::nullopt;
  if (!kind) {
    throw Error(ErrorCode::UnknownKind, "unknown envelope kind " + kind_json.dump(), "kind");
  }
  check_keys(j, {}, {"version", "kind", "partition", "seq", "timestamp", "payload"});

  MessageEnvelope e;
  e.version = kEnvelopeVersion;
  e.kind = *kind;
  e.partition = get_string(j, "partition", {});
  if (!valid_partition_name(e.partition)) schema_error("partition", "invalid partition name");
  e.seq = get_count(j, "seq", {});
  if (e.seq == 0) schema_error("seq", "must be positive");
  e.timestamp = get_timestamp(j, "timestamp", {});

  const auto& p = j.at("payload");
  switch (e.kind) {
    case EnvelopeKind::SOR: e.payload = sor_from_json(p, "payload"); break;
    case EnvelopeKind::EOR: e.payload = eor_from_json(p, "payload"); break;
    case EnvelopeKind::MRS: e.payload = mrs_from_json(p, "payload"); break;
    case EnvelopeKind::IS: e.payload = is_info_from_json(p, "payload"); break;
    case EnvelopeKind::COMMENT: e.payload = comment_payload_from_json(p, "payload"); break;
  }
  return e;
}

std::string scalar_to_text(const Scalar& value) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else if constexpr (std::is_same_v<T, double>) {
          return float_text(v);
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else if constexpr (std::is_same_v<T, Timestamp>) {
          return format_timestamp(v);
        } else {
          return list_to_json(v).dump();
        }
      },
      value);
}

Scalar scalar_from_text(std::string_view type_name, std::string_view text, const std::string& path) {
  const auto parts = split_type_name(type_name);
  if (!parts) schema_error(path, "unknown scalar type '" + std::string(type_name) + "'");
  const char* first = text.data();
  const char* last = text.data() + text.size();
  switch (parts->first) {
    case ScalarTag::Int: {
      std::int64_t v = 0;
      const auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc{} || res.ptr != last) schema_error(path, "invalid int");
      return v;
    }
    case ScalarTag::Float: {
      double v = 0;
      const auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc{} || res.ptr != last || !std::isfinite(v)) schema_error(path, "invalid float");
      return v;
    }
    case ScalarTag::Bool:
      if (text == "true") return true;
      if (text == "false") return false;
      schema_error(path, "invalid bool");
    case ScalarTag::Str: return std::string(text);
    case ScalarTag::Time: {
      const auto t = parse_timestamp(text);
      if (!t) schema_error(path, "invalid time");
      return *t;
    }
    case ScalarTag::List: {
      const auto j = Json::parse(text, nullptr, false);
      if (j.is_discarded()) schema_error(path, "invalid list");
      return list_from_json(*parts->second, j, path);
    }
  }
  schema_error(path, "unknown scalar type");
}

}  // namespace obk
