#include <algorithm>
#include <array>
#include <random>

#include "obk/bench.hpp"
#include "obk/codec.hpp"
#include "obk/digest.hpp"
#include "obk/error.hpp"

namespace obk {
namespace {

using namespace std::chrono_literals;

// Draws are built from raw engine output so the stream does not depend on
// the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool chance(double p) { return unit() < p; }
  template <typename T, std::size_t N>
  const T& pick(const std::array<T, N>& items) {
    return items[below(N)];
  }
  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

constexpr std::array<const char*, 5> kBeams{"protons", "muons", "Muons", "electrons", "none"};
constexpr std::array<const char*, 4> kTriggers{"Physics", "Cosmic", "Calibration", "Random"};
constexpr std::array<const char*, 6> kMessages{"DAQ_STARTED", "BUFFER_FULL", "LINK_DOWN", "CONFIG_LOADED",
                                               "TIMEOUT", "RATE_CHANGE"};
constexpr std::array<const char*, 5> kApplications{"ROS-1", "SFI-3", "L2PU-12", "EF-7", "RunControl"};
constexpr std::array<const char*, 8> kWords{"event", "buffer", "ROD", "crate", "rate", "é", "<tag>", "a&b"};
constexpr std::array<const char*, 3> kServers{"DF", "RunParams", "Histogramming"};
constexpr std::array<const char*, 3> kClasses{"RunParams", "DFStats", "L2Rates"};
constexpr std::array<const char*, 4> kAuthors{"shifter", "runcoord", "expert", "alice"};
constexpr std::array<const char*, 3> kMediaTypes{"text/plain", "application/octet-stream", "image/png"};

std::string words(Rng& rng, int min_words, int max_words) {
  const auto n = rng.between(min_words, max_words);
  std::string out;
  for (std::int64_t i = 0; i < n; ++i) {
    if (i) out += rng.chance(0.1) ? "\n" : " ";
    out += rng.pick(kWords);
  }
  if (rng.chance(0.05)) out = "  " + out;
  return out;
}

Scalar attribute_value(Rng& rng, std::size_t class_index, std::uint64_t attr_index) {
  // The type of attribute k depends only on (class, k).
  switch ((class_index + attr_index) % 7) {
    case 0: return static_cast<std::int64_t>(rng.between(-1000, 100000));
    case 1: return static_cast<double>(rng.between(-100000, 100000)) / 64.0;
    case 2: return rng.chance(0.5);
    case 3: return words(rng, 1, 3);
    case 4: return from_epoch_ms(1041379200000 + rng.between(0, 400LL * 86400000));
    case 5: {
      std::vector<std::int64_t> v(rng.below(4));
      for (auto& x : v) x = rng.between(0, 50);
      return ScalarList{v};
    }
    default: {
      std::vector<std::string> v(rng.below(3));
      for (auto& x : v) x = rng.pick(kWords);
      return ScalarList{v};
    }
  }
}

}  // namespace

void validate_workload(const WorkloadSpec& spec) {
  if (spec.publishers == 0) throw Error(ErrorCode::InvalidValue, "publishers must be at least 1", "publishers");
  if (spec.num_runs > kMaxRunNumber) throw Error(ErrorCode::InvalidValue, "too many runs", "num_runs");
}

std::string bench_partition(std::uint64_t publisher_index) { return "BENCH" + std::to_string(publisher_index + 1); }

std::vector<PublisherStream> generate_stream(const WorkloadSpec& spec) {
  validate_workload(spec);
  std::vector<PublisherStream> out;
  for (std::uint64_t p = 0; p < spec.publishers; ++p) {
    Rng rng(spec.seed * 0x9E3779B97F4A7C15ULL + p);
    PublisherStream stream;
    const auto partition = bench_partition(p);
    std::uint64_t seq = 0;
    auto clock = from_epoch_ms(1041379200000 + static_cast<std::int64_t>(p) * 3600000);
    auto envelope = [&](EnvelopeKind kind, Timestamp ts, EnvelopePayload payload) {
      MessageEnvelope e;
      e.kind = kind;
      e.partition = partition;
      e.seq = ++seq;
      e.timestamp = ts;
      e.payload = std::move(payload);
      stream.push_back(std::move(e));
    };

    for (std::uint64_t run = 1; run <= spec.num_runs; ++run) {
      clock += std::chrono::milliseconds(rng.between(1000, 600000));
      const auto start = clock;
      SorPayload sor;
      sor.run_number = run;
      sor.max_events = static_cast<std::uint64_t>(rng.between(1, 20)) * 5000;
      sor.trigger_type = *TriggerType::from_label(rng.pick(kTriggers));
      sor.beam_type = rng.pick(kBeams);
      sor.detector_mask = DetectorMask{static_cast<std::uint32_t>(rng.raw())};
      envelope(EnvelopeKind::SOR, start, sor);

      std::vector<EnvelopeKind> body;
      body.insert(body.end(), spec.mrs_per_run, EnvelopeKind::MRS);
      body.insert(body.end(), spec.is_per_run, EnvelopeKind::IS);
      body.insert(body.end(), spec.comments_per_run, EnvelopeKind::COMMENT);
      for (std::size_t i = body.size(); i > 1; --i) std::swap(body[i - 1], body[rng.below(i)]);

      auto latest = start;
      for (const auto kind : body) {
        // Publisher clocks disagree: timestamps mostly advance but sometimes step back.
        clock += std::chrono::milliseconds(rng.chance(0.1) ? -rng.between(1, 50) : rng.between(1, 2000));
        latest = std::max(latest, clock);
        switch (kind) {
          case EnvelopeKind::MRS: {
            MrsMessage m;
            m.message_name = rng.pick(kMessages);
            const auto roll = rng.below(100);
            m.severity = roll < 60 ? Severity::Information
                         : roll < 85 ? Severity::Warning
                         : roll < 97 ? Severity::Error
                                     : Severity::Fatal;
            m.application = rng.pick(kApplications);
            m.text = words(rng, 1, 8);
            m.timestamp = clock;
            for (auto q = rng.below(3); q > 0; --q) m.qualifiers.push_back(rng.pick(kWords));
            envelope(EnvelopeKind::MRS, clock, m);
            break;
          }
          case EnvelopeKind::IS: {
            IsInfo info;
            const auto ci = rng.below(kClasses.size());
            info.class_name = kClasses[ci];
            info.server = rng.pick(kServers);
            info.object_name = info.server + "." + info.class_name + "." + std::to_string(rng.below(4));
            info.timestamp = clock;
            for (std::uint64_t a = 0; a < spec.is_attrs_per_object; ++a) {
              info.attributes.push_back(IsAttribute{"p" + std::to_string(a), attribute_value(rng, ci, a)});
            }
            envelope(EnvelopeKind::IS, clock, info);
            break;
          }
          default: {
            CommentPayload c;
            c.author = rng.pick(kAuthors);
            c.text = words(rng, 0, 10);
            c.origin = CommentOrigin::Online;
            if (c.text.empty() || rng.chance(0.3)) {
              AttachmentUpload up;
              up.content.resize(rng.below(2048));
              for (auto& ch : up.content) ch = static_cast<char>(rng.below(256));
              up.meta.filename = "note" + std::to_string(rng.below(100)) + ".txt";
              up.meta.media_type = rng.pick(kMediaTypes);
              up.meta.size_bytes = up.content.size();
              up.meta.digest = sha256_hex(up.content);
              c.attachments.push_back(std::move(up));
            }
            envelope(EnvelopeKind::COMMENT, clock, c);
          }
        }
      }

      clock = latest + std::chrono::milliseconds(rng.between(1, 5000));
      EorPayload eor;
      eor.status = rng.chance(0.9) ? RunStatus::Good : RunStatus::Bad;
      eor.num_events = rng.below(sor.max_events + 1);
      envelope(EnvelopeKind::EOR, clock, eor);
    }
    out.push_back(std::move(stream));
  }
  return out;
}

std::string encode_stream(const std::vector<PublisherStream>& streams) {
  std::string out;
  for (const auto& s : streams) {
    for (const auto& e : s) {
      out += encode_canonical(e);
      out += '\n';
    }
  }
  return out;
}

}  // namespace obk
