#include "commands.hpp"

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <pthread.h>

#include "obk/acquisition_server.hpp"
#include "obk/auth.hpp"
#include "obk/bench.hpp"
#include "obk/codec.hpp"
#include "obk/digest.hpp"
#include "obk/error.hpp"
#include "obk/ingest.hpp"
#include "obk/query.hpp"
#include "obk/service.hpp"
#include "obk/storage.hpp"

namespace obk::cli {
namespace {

BackendId backend_arg(const std::string& text) {
  const auto b = parse_backend_id(text);
  if (!b) throw Error(ErrorCode::InvalidValue, "unknown backend '" + text + "' (file or relational)", "backend");
  return *b;
}

SyncMode sync_arg(const std::string& text) {
  if (text == "buffered") return SyncMode::Buffered;
  if (text == "durable") return SyncMode::Durable;
  throw Error(ErrorCode::InvalidValue, "sync must be buffered or durable", "sync");
}

std::unique_ptr<Repository> open_writable(const std::string& root, SyncMode sync = SyncMode::Buffered) {
  return open_repository(root, RepositoryOptions{true, sync});
}

std::unique_ptr<Repository> open_readonly(const std::string& root) {
  return open_repository(root, RepositoryOptions{false, SyncMode::Buffered});
}

// Blocks SIGINT/SIGTERM in every thread started afterwards and waits for one.
class SignalWaiter {
 public:
  SignalWaiter() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, nullptr);
  }
  int wait() {
    int sig = 0;
    sigwait(&set_, &sig);
    return sig;
  }

 private:
  sigset_t set_{};
};

std::string read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read '" + path + "'", "attach");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::Io, "error reading '" + path + "'", "attach");
  return ss.str();
}

std::string guess_media_type(const std::filesystem::path& path) {
  static const std::map<std::string, std::string> types{
      {".txt", "text/plain"},        {".log", "text/plain"},        {".csv", "text/csv"},
      {".json", "application/json"}, {".xml", "application/xml"},   {".pdf", "application/pdf"},
      {".png", "image/png"},         {".jpg", "image/jpeg"},        {".jpeg", "image/jpeg"},
      {".gif", "image/gif"},         {".svg", "image/svg+xml"},     {".html", "text/html"},
      {".gz", "application/gzip"},   {".tar", "application/x-tar"}, {".zip", "application/zip"},
  };
  std::string ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  const auto it = types.find(ext);
  return it == types.end() ? "application/octet-stream" : it->second;
}

std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\r\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << csv_field(row[i]);
  }
  out << "\r\n";
}

void write_table(std::ostream& out, const std::vector<std::string>& head,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(head.size());
  for (std::size_t i = 0; i < head.size(); ++i) width[i] = head[i].size();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  auto line = [&](const std::vector<std::string>& r) {
    std::string s;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) s += "  ";
      s += r[i];
      if (i + 1 < r.size()) s.append(width[i] - r[i].size(), ' ');
    }
    out << s << '\n';
  };
  line(head);
  for (const auto& r : rows) line(r);
}

const std::vector<std::string> kRunColumns{"Partition", "Run",     "Start",   "End",          "Status",
                                           "Events",    "MaxEvents", "Trigger", "DetectorMask", "Beam"};

std::vector<std::string> run_row(const RunHeader& h) {
  return {h.partition,
          std::to_string(h.run_number),
          format_timestamp(h.start_time),
          h.end_time ? format_timestamp(*h.end_time) : std::string(),
          std::string(to_string(h.status)),
          std::to_string(h.num_events),
          std::to_string(h.max_events),
          std::string(h.trigger_type.label()),
          detector_mask_format(h.detector_mask),
          h.beam_type};
}

void check_format(const std::string& format) {
  if (format != "table" && format != "json" && format != "csv") {
    throw Error(ErrorCode::InvalidValue, "format must be table, json or csv", "format");
  }
}

// Type inference for --where values: bool, int, float, time, else string.
Scalar infer_scalar(const std::string& text, const std::string& type) {
  if (!type.empty()) {
    const auto tag = parse_scalar_tag(type);
    if (!tag || *tag == ScalarTag::List) {
      throw Error(ErrorCode::InvalidValue, "type must be int, float, bool, str or time", "type");
    }
    return scalar_from_text(type, text, "where");
  }
  if (text == "true") return true;
  if (text == "false") return false;
  if (const auto t = parse_timestamp(text)) return *t;
  try {
    return scalar_from_text("int", text);
  } catch (const Error&) {
  }
  try {
    return scalar_from_text("float", text);
  } catch (const Error&) {
  }
  return text;
}

std::filesystem::path out_path(const BenchOptions& o, const std::string& name) {
  const std::filesystem::path dir = o.out_dir.empty() ? std::filesystem::path(".") : std::filesystem::path(o.out_dir);
  std::filesystem::create_directories(dir);
  return dir / name;
}

template <typename F>
void write_out(const std::filesystem::path& path, F&& writer) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  writer(f);
  f.flush();
  if (!f) throw Error(ErrorCode::Io, "error writing '" + path.string() + "'");
}

WorkloadSpec workload_of(const BenchOptions& o) {
  WorkloadSpec s;
  s.num_runs = o.runs;
  s.mrs_per_run = o.mrs;
  s.is_per_run = o.is;
  s.comments_per_run = o.comments;
  s.is_attrs_per_object = o.attrs;
  s.seed = o.seed;
  validate_workload(s);
  return s;
}

void print_summary(const LatencyReport& r, std::ostream& out) {
  out << to_string(r.backend) << " (" << (r.sync == SyncMode::Durable ? "durable" : "buffered") << ")\n";
  std::vector<std::vector<std::string>> rows;
  auto fmt = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << v;
    return s.str();
  };
  for (const auto& s : r.summary) {
    rows.push_back({std::string(to_string(s.op)), std::to_string(s.count), fmt(s.min_us), fmt(s.max_us), fmt(s.mean_us),
                    fmt(s.median_us)});
  }
  write_table(out, {"Operation", "Count", "Min(us)", "Max(us)", "Mean(us)", "Median(us)"}, rows);
  out << "SOR slope: " << fmt(r.sor_slope_us_per_run) << " us/run\n";
}

std::string read_password(const UserOptions& o) {
  if (!o.password_stdin) {
    if (o.password.empty()) throw Error(ErrorCode::InvalidValue, "password required", "password");
    return o.password;
  }
  std::string line;
  std::getline(std::cin, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.empty()) throw Error(ErrorCode::InvalidValue, "empty password on stdin", "password");
  return line;
}

Role role_arg(const std::string& text) {
  const auto r = parse_role(text);
  if (!r) throw Error(ErrorCode::InvalidValue, "role must be Reader, Writer or Admin", "role");
  return *r;
}

}  // namespace

int report_failure(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    std::cerr << "obk: " << to_string(err->code()) << ": " << err->what();
    if (!err->field().empty()) std::cerr << " [" << err->field() << "]";
    std::cerr << '\n';
  } else {
    std::cerr << "obk: " << e.what() << '\n';
  }
  return 1;
}

int cmd_acquire(const AcquireOptions& o, std::ostream& out) {
  const auto backend = backend_arg(o.backend);
  const auto sync = sync_arg(o.sync);
  AcquisitionConfig config;
  config.listen = o.listen;
  if (!o.filter.empty()) config.filter = load_filter(o.filter);
  const auto policy = parse_orphan_policy(o.orphan);
  if (!policy) throw Error(ErrorCode::InvalidValue, "orphan policy must be reject or store", "orphan");
  config.orphan_policy = *policy;

  std::unique_ptr<Repository> repo;
  if (detect_backend(o.root)) {
    repo = open_writable(o.root, sync);
    if (repo->backend() != backend) {
      throw Error(ErrorCode::InvalidValue, "repository at '" + o.root + "' uses the " +
                                               std::string(to_string(repo->backend())) + " backend", "backend");
    }
  } else {
    repo = create_repository(backend, o.root, RepositoryOptions{true, sync});
  }

  SignalWaiter signals;
  AcquisitionServer server(*repo, config);
  server.start();
  out << "listening on " << server.address() << std::endl;
  signals.wait();
  server.stop();
  const auto c = server.counters();
  out << "acked " << c.acked_ok << ", rejected " << c.rejected << ", records " << c.records_persisted << std::endl;
  return 0;
}

int cmd_comment(const CommentOptions& o, std::ostream& out) {
  std::vector<UploadFile> files;
  for (const auto& path : o.attach) {
    const std::filesystem::path p(path);
    files.push_back(UploadFile{p.filename().string(), guess_media_type(p), read_binary_file(path)});
  }
  if (o.text.empty() && files.empty()) {
    throw Error(ErrorCode::InvalidValue, "comment needs --text or at least one --attach", "text");
  }

  if (o.root.empty()) {
    if (o.server.empty()) throw Error(ErrorCode::InvalidValue, "either --root or --server is required", "server");
    if (o.token.empty()) throw Error(ErrorCode::InvalidValue, "online comments need --token", "token");
    OnlineComment c;
    c.partition = o.partition;
    c.run_number = o.run;
    c.text = o.text;
    if (!o.author.empty()) c.author = o.author;
    c.origin = o.origin;
    c.files = std::move(files);
    out << post_comment_online(o.server, o.token, c) << '\n';
    return 0;
  }

  if (o.author.empty()) throw Error(ErrorCode::InvalidValue, "offline comments need --author", "author");
  const auto repo = open_writable(o.root);
  const auto header = repo->find_run_header(o.partition, o.run);
  if (!header) {
    throw Error(ErrorCode::UnknownRun, "unknown run " + o.partition + "/" + std::to_string(o.run), "run");
  }
  Comment c;
  c.author = o.author;
  c.created_at = now_utc();
  c.text = o.text;
  if (o.origin == "auto") {
    c.origin = origin_for_run_state(header->status);
  } else if (const auto origin = parse_comment_origin(o.origin)) {
    c.origin = *origin;
  } else {
    throw Error(ErrorCode::InvalidValue, "origin must be Online, Offline, Web or auto", "origin");
  }
  std::vector<std::string> contents;
  for (auto& f : files) {
    c.attachments.push_back(Attachment{f.filename, f.media_type, f.content.size(), sha256_hex(f.content)});
    contents.push_back(std::move(f.content));
  }
  out << repo->append_comment(o.partition, o.run, c, contents) << '\n';
  return 0;
}

int cmd_query_runs(const RunsQueryOptions& o, std::ostream& out) {
  check_format(o.format);
  std::vector<std::pair<std::string, std::string>> params;
  if (!o.status.empty()) params.emplace_back("status", o.status);
  if (o.max_events) params.emplace_back("max_events", std::to_string(*o.max_events));
  if (!o.start_from.empty()) params.emplace_back("start_from", o.start_from);
  if (!o.start_to.empty()) params.emplace_back("start_to", o.start_to);
  if (!o.beam_type.empty()) params.emplace_back("beam_type", o.beam_type);
  if (!o.trigger_type.empty()) params.emplace_back("trigger_type", o.trigger_type);
  params.emplace_back("sort", o.sort);
  params.emplace_back("dir", o.dir);
  const auto q = parse_runs_query(params);

  const auto repo = open_readonly(o.root);
  const auto runs = find_runs(*repo, q.criteria, o.include_open);
  if (o.format == "json") {
    for (const auto& h : runs) out << encode_canonical(h) << '\n';
  } else if (o.format == "csv") {
    write_csv_row(out, kRunColumns);
    for (const auto& h : runs) write_csv_row(out, run_row(h));
  } else {
    std::vector<std::vector<std::string>> rows;
    for (const auto& h : runs) rows.push_back(run_row(h));
    write_table(out, kRunColumns, rows);
  }
  return 0;
}

int cmd_query_is(const IsQueryOptions& o, std::ostream& out) {
  check_format(o.format);
  std::optional<IsPredicate> predicate;
  if (!o.where.empty()) {
    if (o.where.size() != 2) throw Error(ErrorCode::InvalidCriteria, "--where takes OP VALUE", "where");
    const auto op = parse_predicate_op(o.where[0]);
    if (!op) throw Error(ErrorCode::InvalidCriteria, "operator must be =, <, > or contains", "where");
    predicate = IsPredicate{*op, infer_scalar(o.where[1], o.type)};
  }
  const auto repo = open_readonly(o.root);
  const auto hits = find_is_instances(
      *repo, o.partition.empty() ? std::nullopt : std::optional<std::string_view>(o.partition), o.class_name, o.param,
      predicate);

  const std::vector<std::string> head{"Partition", "Run", "Record", "Object", "Timestamp", "Type", "Value"};
  auto row = [](const IsInstance& i) {
    return std::vector<std::string>{i.partition,        std::to_string(i.run_number), std::to_string(i.record_id),
                                    i.object_name,      format_timestamp(i.timestamp), scalar_type_name(i.value),
                                    scalar_to_text(i.value)};
  };
  if (o.format == "json") {
    for (const auto& i : hits) {
      out << Json{{"partition", i.partition},
                  {"run_number", i.run_number},
                  {"record_id", i.record_id},
                  {"object_name", i.object_name},
                  {"timestamp", format_timestamp(i.timestamp)},
                  {"type", scalar_type_name(i.value)},
                  {"value", scalar_to_json(i.value)}}
                 .dump()
          << '\n';
    }
  } else if (o.format == "csv") {
    write_csv_row(out, head);
    for (const auto& i : hits) write_csv_row(out, row(i));
  } else {
    std::vector<std::vector<std::string>> rows;
    for (const auto& i : hits) rows.push_back(row(i));
    write_table(out, head, rows);
  }
  return 0;
}

int cmd_query_run(const RunDetailOptions& o, std::ostream& out) {
  const auto repo = open_readonly(o.root);
  out << run_detail_to_json(get_run(*repo, o.partition, o.run)).dump(2) << '\n';
  return 0;
}

int cmd_admin_init(const std::string& backend, const std::string& root, std::ostream& out) {
  const auto repo = create_repository(backend_arg(backend), root);
  out << "created " << to_string(repo->backend()) << " repository at " << repo->root().string() << '\n';
  return 0;
}

int cmd_user_add(const UserOptions& o, std::ostream& out) {
  if (!valid_username(o.username)) throw Error(ErrorCode::InvalidValue, "invalid user name", "username");
  const auto role = role_arg(o.role);
  const auto password = read_password(o);
  const auto repo = open_writable(o.root);
  if (repo->get_user(o.username)) {
    throw Error(ErrorCode::AlreadyExists, "user '" + o.username + "' already exists", "username");
  }
  repo->put_user(UserRecord{o.username, hash_password(password, PasswordHashParams{}), role});
  out << "added " << o.username << " (" << to_string(role) << ")\n";
  return 0;
}

int cmd_user_passwd(const UserOptions& o, std::ostream& out) {
  const auto password = read_password(o);
  const auto repo = open_writable(o.root);
  auto user = repo->get_user(o.username);
  if (!user) throw Error(ErrorCode::InvalidValue, "no user '" + o.username + "'", "username");
  user->password_hash = hash_password(password, PasswordHashParams{});
  repo->put_user(*user);
  out << "password changed for " << o.username << '\n';
  return 0;
}

int cmd_user_role(const UserOptions& o, std::ostream& out) {
  const auto role = role_arg(o.role);
  const auto repo = open_writable(o.root);
  auto user = repo->get_user(o.username);
  if (!user) throw Error(ErrorCode::InvalidValue, "no user '" + o.username + "'", "username");
  user->role = role;
  repo->put_user(*user);
  out << o.username << " is now " << to_string(role) << '\n';
  return 0;
}

int cmd_force_close(const std::string& root, const std::string& partition, std::uint64_t run, std::ostream& out) {
  const auto repo = open_writable(root);
  const auto h = repo->force_close(partition, run);
  out << h.partition << '/' << h.run_number << ' ' << to_string(h.status) << ' ' << format_timestamp(*h.end_time)
      << '\n';
  return 0;
}

int cmd_export(const std::string& root, const std::string& output, std::ostream& out) {
  const auto repo = open_readonly(root);
  const auto text = export_canonical(*repo);
  if (output.empty() || output == "-") {
    out << text;
  } else {
    write_out(output, [&](std::ostream& f) { f << text; });
  }
  return 0;
}

int cmd_serve(const std::string& config_path, std::ostream& out) {
  const auto config = load_service_config(config_path);
  std::shared_ptr<Repository> repo = open_service_repository(config);
  SignalWaiter signals;
  Service service(config, repo);
  service.start();
  const auto host = parse_host_port(config.listen).first;
  out << "listening on http://" << (host.empty() ? "0.0.0.0" : host) << ':' << service.port() << std::endl;
  signals.wait();
  service.stop();
  return 0;
}

int cmd_bench_latency(const BenchOptions& o, std::ostream& out) {
  const auto backend = backend_arg(o.backend);
  const auto spec = workload_of(o);
  if (o.root.empty()) throw Error(ErrorCode::InvalidValue, "--root is required", "root");
  const auto report = run_latency_bench(backend, o.root, spec, sync_arg(o.sync));
  const std::string stem = "latency_" + std::string(backend == BackendId::FileStore ? "file" : "relational");
  write_out(out_path(o, stem + "_series.csv"), [&](std::ostream& f) { write_latency_series_csv(report, f); });
  write_out(out_path(o, stem + "_summary.csv"), [&](std::ostream& f) { write_latency_summary_csv(report, f); });
  write_out(out_path(o, stem + ".dat"), [&](std::ostream& f) { write_latency_gnuplot(report, f); });
  print_summary(report, out);
  return 0;
}

int cmd_bench_scale(const BenchOptions& o, std::ostream& out) {
  const auto backend = backend_arg(o.backend);
  const auto spec = workload_of(o);
  if (o.root.empty()) throw Error(ErrorCode::InvalidValue, "--root is required", "root");
  const auto points = run_scalability_bench(backend, o.root, spec, o.publishers, sync_arg(o.sync));
  const std::string name =
      "scale_" + std::string(backend == BackendId::FileStore ? "file" : "relational") + ".csv";
  write_out(out_path(o, name), [&](std::ostream& f) { write_scale_csv(points, f); });
  write_scale_csv(points, out);
  bool lossless = true;
  for (const auto& p : points) lossless = lossless && p.rejected == 0 && p.acked_ok == p.persisted;
  if (!lossless) {
    std::cerr << "obk: message loss detected\n";
    return 1;
  }
  return 0;
}

int cmd_bench_compare(const BenchOptions& o, std::ostream& out) {
  const auto spec = workload_of(o);
  if (o.root.empty()) throw Error(ErrorCode::InvalidValue, "--root is required", "root");
  const auto report = compare_backends(o.root, spec, sync_arg(o.sync));
  write_out(out_path(o, "compare.csv"), [&](std::ostream& f) { write_compare_csv(report, f); });
  print_summary(report.file, out);
  print_summary(report.relational, out);
  out << "exports " << (report.exports_equal ? "identical" : "DIFFER") << " (" << report.export_bytes << " bytes)\n";
  if (!report.exports_equal) {
    std::cerr << "obk: first difference: " << report.first_difference << '\n';
    return 1;
  }
  return 0;
}

}  // namespace obk::cli
