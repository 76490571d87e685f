#include "xml_codec.hpp"

#include <algorithm>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "obk/codec.hpp"
#include "obk/error.hpp"

namespace obk::storage_detail {
namespace {

namespace pt = boost::property_tree;

bool is_xml_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

std::string char_ref(char c) { return "&#" + std::to_string(static_cast<int>(static_cast<unsigned char>(c))) + ";"; }

std::string escape(std::string_view text, bool attribute) {
  std::string out;
  out.reserve(text.size() + 8);
  // Parsers drop whitespace-only element content; pin it with a character reference.
  const bool all_space = !text.empty() && std::all_of(text.begin(), text.end(), is_xml_space);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += attribute ? "&quot;" : "\""; break;
      case '\r': out += "&#13;"; break;
      case '\t':
      case '\n':
        if (attribute || (all_space && i == 0)) {
          out += char_ref(c);
        } else {
          out += c;
        }
        break;
      case ' ':
        out += (all_space && i == 0 && !attribute) ? "&#32;" : " ";
        break;
      default: out += c;
    }
  }
  return out;
}

class XmlWriter {
 public:
  void open(std::string_view name, int depth, std::initializer_list<std::pair<std::string_view, std::string>> attrs = {}) {
    indent(depth);
    out_ += '<';
    out_ += name;
    for (const auto& [k, v] : attrs) {
      out_ += ' ';
      out_ += k;
      out_ += "=\"";
      out_ += escape(v, true);
      out_ += '"';
    }
    out_ += ">\n";
  }
  void close(std::string_view name, int depth) {
    indent(depth);
    out_ += "</";
    out_ += name;
    out_ += ">\n";
  }
  void leaf(std::string_view name, std::string_view text, int depth,
            std::initializer_list<std::pair<std::string_view, std::string>> attrs = {}) {
    indent(depth);
    out_ += '<';
    out_ += name;
    for (const auto& [k, v] : attrs) {
      out_ += ' ';
      out_ += k;
      out_ += "=\"";
      out_ += escape(v, true);
      out_ += '"';
    }
    out_ += '>';
    out_ += escape(text, false);
    out_ += "</";
    out_ += name;
    out_ += ">\n";
  }
  void raw(std::string_view s) { out_ += s; }
  std::string take() { return std::move(out_); }

 private:
  void indent(int depth) { out_.append(static_cast<std::size_t>(depth) * 2, ' '); }
  std::string out_;
};

[[noreturn]] void bad(std::string_view origin, const std::string& what) {
  throw Error(ErrorCode::Io, "malformed run document " + std::string(origin) + ": " + what);
}

const pt::ptree& child(const pt::ptree& node, std::string_view name, std::string_view origin) {
  const auto it = node.find(std::string(name));
  if (it == node.not_found()) bad(origin, "missing <" + std::string(name) + ">");
  return it->second;
}

std::string text(const pt::ptree& node, std::string_view name, std::string_view origin) {
  return child(node, name, origin).data();
}

std::string attr(const pt::ptree& node, std::string_view name, std::string_view origin) {
  const auto attrs = node.get_child_optional("<xmlattr>");
  if (!attrs) bad(origin, "missing attribute " + std::string(name));
  const auto value = attrs->get_optional<std::string>(std::string(name));
  if (!value) bad(origin, "missing attribute " + std::string(name));
  return *value;
}

std::uint64_t to_u64(const std::string& s, std::string_view origin) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size()) bad(origin, "bad integer '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    bad(origin, "bad integer '" + s + "'");
  }
}

Timestamp to_time(const std::string& s, std::string_view origin) {
  const auto t = parse_timestamp(s);
  if (!t) bad(origin, "bad timestamp '" + s + "'");
  return *t;
}

void write_header(XmlWriter& w, const RunHeader& h) {
  w.open("header", 1);
  w.leaf("partition", h.partition, 2);
  w.leaf("run_number", std::to_string(h.run_number), 2);
  w.leaf("start_time", format_timestamp(h.start_time), 2);
  if (h.end_time) w.leaf("end_time", format_timestamp(*h.end_time), 2);
  w.leaf("status", to_string(h.status), 2);
  w.leaf("num_events", std::to_string(h.num_events), 2);
  w.leaf("max_events", std::to_string(h.max_events), 2);
  w.leaf("trigger_type", h.trigger_type.label(), 2);
  w.leaf("beam_type", h.beam_type, 2);
  w.leaf("detector_mask", detector_mask_format(h.detector_mask), 2);
  w.close("header", 1);
}

RunHeader read_header(const pt::ptree& node, std::string_view origin) {
  RunHeader h;
  h.partition = text(node, "partition", origin);
  h.run_number = to_u64(text(node, "run_number", origin), origin);
  h.start_time = to_time(text(node, "start_time", origin), origin);
  if (node.find("end_time") != node.not_found()) h.end_time = to_time(text(node, "end_time", origin), origin);
  const auto status = parse_run_status(text(node, "status", origin));
  if (!status) bad(origin, "bad status");
  h.status = *status;
  h.num_events = to_u64(text(node, "num_events", origin), origin);
  h.max_events = to_u64(text(node, "max_events", origin), origin);
  const auto trigger = TriggerType::from_label(text(node, "trigger_type", origin));
  if (!trigger) bad(origin, "bad trigger type");
  h.trigger_type = *trigger;
  h.beam_type = text(node, "beam_type", origin);
  try {
    h.detector_mask = detector_mask_parse(text(node, "detector_mask", origin));
  } catch (const Error&) {
    bad(origin, "bad detector mask");
  }
  return h;
}

void write_mrs(XmlWriter& w, const StoredMrs& r) {
  w.open("mrs", 1, {{"record_id", std::to_string(r.record_id)}});
  w.leaf("timestamp", format_timestamp(r.message.timestamp), 2);
  w.leaf("message_name", r.message.message_name, 2);
  w.leaf("severity", to_string(r.message.severity), 2);
  w.leaf("application", r.message.application, 2);
  w.leaf("text", r.message.text, 2);
  for (const auto& q : r.message.qualifiers) w.leaf("qualifier", q, 2);
  w.close("mrs", 1);
}

StoredMrs read_mrs(const pt::ptree& node, std::string_view origin) {
  StoredMrs r;
  r.record_id = to_u64(attr(node, "record_id", origin), origin);
  r.message.timestamp = to_time(text(node, "timestamp", origin), origin);
  r.message.message_name = text(node, "message_name", origin);
  const auto sev = parse_severity(text(node, "severity", origin));
  if (!sev) bad(origin, "bad severity");
  r.message.severity = *sev;
  r.message.application = text(node, "application", origin);
  r.message.text = text(node, "text", origin);
  for (const auto& [name, sub] : node) {
    if (name == "qualifier") r.message.qualifiers.push_back(sub.data());
  }
  return r;
}

void write_is(XmlWriter& w, const StoredIs& r) {
  w.open("is", 1, {{"record_id", std::to_string(r.record_id)}});
  w.leaf("timestamp", format_timestamp(r.info.timestamp), 2);
  w.leaf("server", r.info.server, 2);
  w.leaf("object_name", r.info.object_name, 2);
  w.leaf("class_name", r.info.class_name, 2);
  for (const auto& a : r.info.attributes) {
    w.leaf("attr", scalar_to_text(a.value), 2, {{"name", a.name}, {"type", scalar_type_name(a.value)}});
  }
  w.close("is", 1);
}

StoredIs read_is(const pt::ptree& node, std::string_view origin) {
  StoredIs r;
  r.record_id = to_u64(attr(node, "record_id", origin), origin);
  r.info.timestamp = to_time(text(node, "timestamp", origin), origin);
  r.info.server = text(node, "server", origin);
  r.info.object_name = text(node, "object_name", origin);
  r.info.class_name = text(node, "class_name", origin);
  for (const auto& [name, sub] : node) {
    if (name != "attr") continue;
    IsAttribute a;
    a.name = attr(sub, "name", origin);
    try {
      a.value = scalar_from_text(attr(sub, "type", origin), sub.data(), a.name);
    } catch (const Error& e) {
      bad(origin, e.what());
    }
    r.info.attributes.push_back(std::move(a));
  }
  return r;
}

void write_comment(XmlWriter& w, const Comment& c) {
  w.open("comment", 1, {{"comment_id", std::to_string(c.comment_id)}});
  w.leaf("author", c.author, 2);
  w.leaf("created_at", format_timestamp(c.created_at), 2);
  w.leaf("origin", to_string(c.origin), 2);
  w.leaf("text", c.text, 2);
  for (const auto& a : c.attachments) {
    w.open("attachment", 2);
    w.leaf("filename", a.filename, 3);
    w.leaf("media_type", a.media_type, 3);
    w.leaf("size_bytes", std::to_string(a.size_bytes), 3);
    w.leaf("digest", a.digest, 3);
    w.close("attachment", 2);
  }
  w.close("comment", 1);
}

Comment read_comment(const pt::ptree& node, std::string_view origin) {
  Comment c;
  c.comment_id = to_u64(attr(node, "comment_id", origin), origin);
  c.author = text(node, "author", origin);
  c.created_at = to_time(text(node, "created_at", origin), origin);
  const auto o = parse_comment_origin(text(node, "origin", origin));
  if (!o) bad(origin, "bad comment origin");
  c.origin = *o;
  c.text = text(node, "text", origin);
  for (const auto& [name, sub] : node) {
    if (name != "attachment") continue;
    Attachment a;
    a.filename = text(sub, "filename", origin);
    a.media_type = text(sub, "media_type", origin);
    a.size_bytes = to_u64(text(sub, "size_bytes", origin), origin);
    a.digest = text(sub, "digest", origin);
    c.attachments.push_back(std::move(a));
  }
  return c;
}

pt::ptree parse(std::string_view xml, std::string_view origin) {
  pt::ptree tree;
  std::istringstream in{std::string(xml)};
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    bad(origin, e.what());
  }
  return tree;
}

}  // namespace

std::string xml_escape_text(std::string_view text) { return escape(text, false); }

std::string run_to_xml(const RunDetail& detail) {
  XmlWriter w;
  w.raw("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
  w.open("run", 0, {{"version", std::to_string(kRepositoryVersion)}});
  write_header(w, detail.header);

  std::vector<const StoredMrs*> mrs;
  std::vector<const StoredIs*> is;
  for (const auto& m : detail.mrs) mrs.push_back(&m);
  for (const auto& i : detail.is) is.push_back(&i);
  std::sort(mrs.begin(), mrs.end(), [](auto* a, auto* b) { return a->record_id < b->record_id; });
  std::sort(is.begin(), is.end(), [](auto* a, auto* b) { return a->record_id < b->record_id; });
  auto mi = mrs.begin();
  auto ii = is.begin();
  while (mi != mrs.end() || ii != is.end()) {
    if (ii == is.end() || (mi != mrs.end() && (*mi)->record_id < (*ii)->record_id)) {
      write_mrs(w, **mi++);
    } else {
      write_is(w, **ii++);
    }
  }

  std::vector<const Comment*> comments;
  for (const auto& c : detail.comments) comments.push_back(&c);
  std::sort(comments.begin(), comments.end(), [](auto* a, auto* b) { return a->comment_id < b->comment_id; });
  for (const auto* c : comments) write_comment(w, *c);
  w.close("run", 0);
  return w.take();
}

RunDetail run_from_xml(std::string_view xml, std::string_view origin) {
  const auto tree = parse(xml, origin);
  const auto& run = child(tree, "run", origin);
  RunDetail detail;
  bool have_header = false;
  for (const auto& [name, node] : run) {
    if (name == "header") {
      detail.header = read_header(node, origin);
      have_header = true;
    } else if (name == "mrs") {
      detail.mrs.push_back(read_mrs(node, origin));
    } else if (name == "is") {
      detail.is.push_back(read_is(node, origin));
    } else if (name == "comment") {
      detail.comments.push_back(read_comment(node, origin));
    }
  }
  if (!have_header) bad(origin, "missing <header>");
  return detail;
}

RunHeader header_from_xml(std::string_view xml, std::string_view origin) {
  static constexpr std::string_view kEnd = "</header>";
  const auto end = xml.find(kEnd);
  if (end == std::string_view::npos) bad(origin, "missing </header>");
  const auto start = xml.find("<header>");
  if (start == std::string_view::npos || start > end) bad(origin, "missing <header>");
  const auto tree = parse(xml.substr(start, end + kEnd.size() - start), origin);
  return read_header(child(tree, "header", origin), origin);
}

}  // namespace obk::storage_detail
