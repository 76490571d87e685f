#include "testing.hpp"

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "obk/digest.hpp"
#include "obk/error.hpp"

namespace obk::test {

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "obk-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

Timestamp ts(const char* iso) {
  const auto t = parse_timestamp(iso);
  if (!t) throw std::runtime_error(std::string("bad timestamp literal ") + iso);
  return *t;
}

Timestamp base_time(std::int64_t seconds) { return ts("2002-08-14T12:00:00.000Z") + std::chrono::seconds(seconds); }

RunHeader open_header(const std::string& partition, std::uint64_t run, Timestamp start) {
  RunHeader h;
  h.partition = partition;
  h.run_number = run;
  h.start_time = start;
  h.max_events = 1000;
  h.trigger_type = TriggerType(TriggerType::Kind::Physics);
  h.beam_type = "Muons";
  h.detector_mask = DetectorMask{0x1};
  return h;
}

MrsMessage mrs(Timestamp t, const std::string& text, Severity s) {
  MrsMessage m;
  m.message_name = "DAQ::Info";
  m.severity = s;
  m.application = "rc";
  m.text = text;
  m.timestamp = t;
  return m;
}

IsInfo is_info(Timestamp t, const std::string& class_name, std::vector<IsAttribute> attrs, const std::string& object,
               const std::string& server) {
  IsInfo i;
  i.server = server;
  i.object_name = object;
  i.class_name = class_name;
  i.attributes = std::move(attrs);
  i.timestamp = t;
  return i;
}

Comment comment(Timestamp t, const std::string& text, const std::string& author, CommentOrigin origin) {
  Comment c;
  c.author = author;
  c.created_at = t;
  c.text = text;
  c.origin = origin;
  return c;
}

Attachment attachment_for(const std::string& filename, const std::string& media_type, const std::string& content) {
  return Attachment{filename, media_type, content.size(), sha256_hex(content)};
}

namespace {

MessageEnvelope envelope(EnvelopeKind kind, const std::string& partition, std::uint64_t seq, Timestamp t,
                         EnvelopePayload payload) {
  MessageEnvelope e;
  e.kind = kind;
  e.partition = partition;
  e.seq = seq;
  e.timestamp = t;
  e.payload = std::move(payload);
  return e;
}

}  // namespace

MessageEnvelope sor_envelope(const std::string& partition, std::uint64_t seq, Timestamp t, std::uint64_t run,
                             std::uint64_t max_events) {
  SorPayload p;
  p.run_number = run;
  p.max_events = max_events;
  p.trigger_type = TriggerType(TriggerType::Kind::Physics);
  p.beam_type = "Muons";
  p.detector_mask = DetectorMask{0x1};
  return envelope(EnvelopeKind::SOR, partition, seq, t, p);
}

MessageEnvelope eor_envelope(const std::string& partition, std::uint64_t seq, Timestamp t, RunStatus status,
                             std::uint64_t num_events) {
  return envelope(EnvelopeKind::EOR, partition, seq, t, EorPayload{status, num_events});
}

MessageEnvelope mrs_envelope(const std::string& partition, std::uint64_t seq, Timestamp t, const std::string& text) {
  return envelope(EnvelopeKind::MRS, partition, seq, t, mrs(t, text));
}

MessageEnvelope is_envelope(const std::string& partition, std::uint64_t seq, Timestamp t, std::int64_t value) {
  return envelope(EnvelopeKind::IS, partition, seq, t,
                  is_info(t, "RunParams", {IsAttribute{"beam_energy", value}}));
}

MessageEnvelope comment_envelope(const std::string& partition, std::uint64_t seq, Timestamp t,
                                 const std::string& text) {
  CommentPayload p;
  p.author = "shifter";
  p.text = text;
  p.origin = CommentOrigin::Online;
  return envelope(EnvelopeKind::COMMENT, partition, seq, t, p);
}

std::string Gen::word(std::size_t min_len, std::size_t max_len) {
  static const std::string alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  const auto n = static_cast<std::size_t>(between(static_cast<std::int64_t>(min_len), static_cast<std::int64_t>(max_len)));
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += alphabet[below(alphabet.size())];
  return s;
}

Timestamp Gen::time_between(Timestamp lo, Timestamp hi) {
  return from_epoch_ms(between(to_epoch_ms(lo), to_epoch_ms(hi)));
}

RunHeader Gen::header(const std::string& partition, std::uint64_t run) {
  RunHeader h;
  h.partition = partition;
  h.run_number = run;
  h.start_time = time_between(base_time(0), base_time(30 * 86400));
  const auto roll = below(10);
  h.status = roll < 5 ? RunStatus::Good : roll < 8 ? RunStatus::Bad : RunStatus::Open;
  h.max_events = static_cast<std::uint64_t>(between(0, 20)) * 500;
  if (h.status != RunStatus::Open) {
    h.end_time = h.start_time + std::chrono::milliseconds(between(0, 7200000));
    h.num_events = below(h.max_events + 1);
  }
  h.trigger_type = *TriggerType::from_label(pick(kTriggers));
  h.beam_type = pick(kBeams);
  h.detector_mask = DetectorMask{static_cast<std::uint32_t>(engine_())};
  return h;
}

MrsMessage Gen::mrs(Timestamp t) {
  static const std::vector<Severity> severities{Severity::Information, Severity::Warning, Severity::Error,
                                                Severity::Fatal};
  MrsMessage m;
  m.message_name = "DAQ::" + word(3, 8);
  m.severity = pick(severities);
  m.application = word(2, 6);
  m.text = word(0, 30);
  m.timestamp = t;
  if (chance(0.3)) m.qualifiers = {word(1, 5), word(1, 5)};
  return m;
}

Scalar Gen::scalar(ScalarTag tag) {
  switch (tag) {
    case ScalarTag::Int: return between(-5, 200);
    case ScalarTag::Float: return static_cast<double>(between(-50, 400)) / 2.0;
    case ScalarTag::Bool: return chance(0.5);
    case ScalarTag::Str: return word(0, 4);
    case ScalarTag::Time: return time_between(base_time(0), base_time(3600));
    case ScalarTag::List: {
      std::vector<std::int64_t> v;
      for (std::uint64_t i = below(3); i > 0; --i) v.push_back(between(0, 3));
      return ScalarList{v};
    }
  }
  return std::int64_t{0};
}

SearchCriteria Gen::criteria() {
  static const std::vector<SortKey> keys{SortKey::RunNumber, SortKey::StartTime, SortKey::NumEvents};
  SearchCriteria c;
  if (chance(0.4)) c.status = chance(0.5) ? RunStatus::Good : RunStatus::Bad;
  if (chance(0.3)) c.max_events_at_most = static_cast<std::uint64_t>(between(0, 20)) * 500;
  if (chance(0.3)) c.start_from = time_between(base_time(0), base_time(20 * 86400));
  if (chance(0.3)) {
    const auto lo = c.start_from.value_or(base_time(0));
    c.start_to = time_between(lo, base_time(31 * 86400));
  }
  if (chance(0.3)) c.beam_type = pick(std::vector<std::string>{"MUONS", "muons", "pions", "Electrons", "none", "x"});
  if (chance(0.3)) c.trigger_type = *TriggerType::from_label(pick(kTriggers));
  c.sort_key = pick(keys);
  c.sort_dir = chance(0.5) ? SortDir::Asc : SortDir::Desc;
  return c;
}

void build_fixture_repository(Repository& repo) {
  struct Spec {
    const char* partition;
    std::uint64_t run;
    const char* start;
    const char* end;
    RunStatus status;
    std::uint64_t events;
    std::uint64_t max_events;
    const char* trigger;
    const char* beam;
    std::uint32_t mask;
  };
  const std::vector<Spec> runs{
      {"TB", 1, "2002-08-01T08:00:00.000Z", "2002-08-01T09:30:00.000Z", RunStatus::Good, 50000, 50000, "Physics", "Muons", 0x0000000f},
      {"TB", 2, "2002-08-02T10:15:00.000Z", "2002-08-02T10:20:12.250Z", RunStatus::Bad, 120, 50000, "Physics", "Muons", 0x0000000f},
      {"TB", 3, "2002-08-05T14:00:00.000Z", "2002-08-05T18:00:00.000Z", RunStatus::Good, 80000, 100000, "Cosmic", "none", 0x00000003},
      {"TB", 4, "2002-08-14T12:00:00.000Z", "2002-08-14T12:45:00.000Z", RunStatus::Good, 10000, 10000, "Calibration", "Pions", 0x00000001},
      {"TB", 5, "2002-08-20T07:30:00.000Z", "2002-08-20T11:00:00.500Z", RunStatus::Good, 99000, 100000, "Physics", "Pions", 0x0000000f},
      {"TB", 6, "2002-09-01T00:00:00.000Z", "2002-09-01T02:00:00.000Z", RunStatus::Bad, 4500, 20000, "Physics", "Electrons", 0x0000010f},
      {"TB", 7, "2002-09-03T16:00:00.000Z", "2002-09-03T16:30:00.000Z", RunStatus::Good, 20000, 20000, "LaserScan", "none", 0x00000100},
      {"TB", 8, "2002-09-10T09:00:00.000Z", nullptr, RunStatus::Open, 0, 200000, "Physics", "Muons", 0x0000010f},
      {"SCT", 1, "2002-08-03T09:00:00.000Z", "2002-08-03T12:00:00.000Z", RunStatus::Good, 30000, 30000, "Physics", "muons", 0xff000000},
      {"SCT", 2, "2002-08-14T12:00:00.000Z", "2002-08-14T13:00:00.000Z", RunStatus::Bad, 0, 30000, "Cosmic", "none", 0xff000000},
      {"SCT", 3, "2002-08-21T08:00:00.000Z", "2002-08-21T20:00:00.000Z", RunStatus::Good, 250000, 250000, "Physics", "Electrons", 0x0f000000},
      {"SCT", 4, "2002-09-02T10:00:00.000Z", "2002-09-02T10:05:00.000Z", RunStatus::Good, 500, 1000, "Calibration", "Pions", 0x00f00000},
  };
  for (const auto& s : runs) {
    RunHeader h;
    h.partition = s.partition;
    h.run_number = s.run;
    h.start_time = ts(s.start);
    h.max_events = s.max_events;
    h.trigger_type = *TriggerType::from_label(s.trigger);
    h.beam_type = s.beam;
    h.detector_mask = DetectorMask{s.mask};
    repo.begin_run(h);

    const auto t0 = h.start_time;
    auto at = [&](int sec) { return t0 + std::chrono::seconds(sec); };
    repo.append_mrs(s.partition, s.run, mrs(at(1), "run control entered Running"));
    if (s.run % 2 == 0) {
      repo.append_mrs(s.partition, s.run, mrs(at(5), "ROD 3 busy", Severity::Warning));
    }
    if (s.status == RunStatus::Bad) {
      MrsMessage m = mrs(at(9), "readout crate lost", Severity::Fatal);
      m.qualifiers = {"ROS", "crate-2"};
      repo.append_mrs(s.partition, s.run, m);
    }
    const std::int64_t energy = 100 + 20 * static_cast<std::int64_t>(s.run);
    repo.append_is(s.partition, s.run,
                   is_info(at(2), "RunParams",
                           {IsAttribute{"beam_energy", energy}, IsAttribute{"magnet_on", s.run % 3 != 0},
                            IsAttribute{"operator", std::string(s.run % 2 ? "ops-a" : "ops-b")}},
                           "RunParams.Beam"));
    repo.append_is(s.partition, s.run,
                   is_info(at(3), "DFStats",
                           {IsAttribute{"rate_hz", 12.5 * static_cast<double>(s.run)},
                            IsAttribute{"rates", ScalarList{std::vector<std::int64_t>{1, 2, static_cast<std::int64_t>(s.run)}}}},
                           "DF.L2", "DF"));
    if (s.end) {
      repo.end_run(s.partition, s.run, s.status, s.events, ts(s.end));
    }
  }

  repo.append_comment("TB", 2, comment(ts("2002-08-02T10:25:00.000Z"), "Crate 2 dropped out; run marked bad."), {});
  const std::string log = "10:20:11 ROS crate-2 timeout\n10:20:12 run stopped\n";
  Comment with_file = comment(ts("2002-08-02T11:00:00.000Z"), "Shifter log attached.", "bob");
  with_file.attachments = {attachment_for("shift.log", "text/plain", log)};
  repo.append_comment("TB", 2, with_file, std::vector<std::string>{log});
  const std::string blob("\x89PNG\r\n\x1a\n\0\0\0\rIHDR", 16);
  Comment plot = comment(ts("2002-08-05T19:00:00.000Z"), "Cosmic rate plot.", "carol");
  plot.attachments = {attachment_for("rate.png", "image/png", blob),
                      attachment_for("rates.bin", "application/octet-stream", std::string("\x01\x02\x03", 3))};
  repo.append_comment("TB", 3, plot, std::vector<std::string>{blob, std::string("\x01\x02\x03", 3)});
  repo.append_comment("SCT", 3, comment(ts("2002-08-21T21:00:00.000Z"), "Good run, 250k events."), {});
  repo.append_comment("TB", 8, comment(ts("2002-09-10T09:30:00.000Z"), "Beam tuning in progress.", "alice",
                                       CommentOrigin::Online), {});
}

std::filesystem::path obk_binary() {
  const char* env = std::getenv("OBK_BINARY");
  if (!env || !*env) throw std::runtime_error("OBK_BINARY is not set");
  return env;
}

ProcessResult run_obk(const std::vector<std::string>& args, const std::string& input) {
  TempDir io;
  const auto in_path = io / "stdin";
  const auto out_path = io / "stdout";
  const auto err_path = io / "stderr";
  std::ofstream(in_path, std::ios::binary) << input;
  const auto binary = obk_binary().string();

  std::vector<std::string> argv_storage{binary};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  argv.push_back(nullptr);

  const pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    const int in = open(in_path.c_str(), O_RDONLY);
    const int out = open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
    const int err = open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
    if (in < 0 || out < 0 || err < 0) _exit(126);
    dup2(in, 0);
    dup2(out, 1);
    dup2(err, 2);
    execv(binary.c_str(), argv.data());
    _exit(127);
  }
  int status = 0;
  waitpid(pid, &status, 0);
  ProcessResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

}  // namespace obk::test
