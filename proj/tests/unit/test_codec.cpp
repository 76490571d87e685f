#include <doctest.h>

#include "obk/codec.hpp"
#include "obk/digest.hpp"
#include "obk/error.hpp"
#include "obk/ingest.hpp"
#include "testing.hpp"

using namespace obk;
using namespace obk::test;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.field();
  }
  return "<none>";
}

Scalar random_scalar(Gen& g) {
  const auto tag = static_cast<ScalarTag>(g.below(6));
  if (tag != ScalarTag::List) return g.scalar(tag);
  switch (g.below(5)) {
    case 0: return ScalarList{std::vector<std::int64_t>{g.between(-9, 9), std::numeric_limits<std::int64_t>::min()}};
    case 1: return ScalarList{std::vector<double>{0.1, -2.5e-300, 1e300}};
    case 2: return ScalarList{std::vector<bool>{true, false}};
    case 3: return ScalarList{std::vector<std::string>{g.word(0, 3), "a,b\"c"}};
    default: return ScalarList{std::vector<Timestamp>{}};
  }
}

MessageEnvelope random_envelope(Gen& g) {
  const auto t = g.time_between(base_time(0), base_time(86400));
  const auto seq = static_cast<std::uint64_t>(g.between(0, 1 << 30));
  switch (g.below(5)) {
    case 0: {
      auto e = sor_envelope("P" + g.word(1, 4), seq, t, static_cast<std::uint64_t>(g.between(1, 1000000)));
      auto& p = std::get<SorPayload>(e.payload);
      p.trigger_type = *TriggerType::from_label(g.pick(kTriggers));
      p.beam_type = g.word(0, 8);
      p.detector_mask = DetectorMask{static_cast<std::uint32_t>(g.engine()())};
      return e;
    }
    case 1: return eor_envelope("TB", seq, t, g.chance(0.5) ? RunStatus::Good : RunStatus::Bad, g.below(1000));
    case 2: {
      auto e = mrs_envelope("TB", seq, t);
      e.payload = g.mrs(t);
      return e;
    }
    case 3: {
      auto e = is_envelope("TB", seq, t);
      auto& info = std::get<IsInfo>(e.payload);
      info.attributes.clear();
      for (std::uint64_t i = g.below(5); i > 0; --i) info.attributes.push_back({"a" + std::to_string(i), random_scalar(g)});
      return e;
    }
    default: {
      auto e = comment_envelope("TB", seq, t, g.word(1, 20));
      if (g.chance(0.5)) {
        const std::string content = g.word(0, 40) + std::string("\0\xff", 2);
        std::get<CommentPayload>(e.payload).attachments.push_back(
            AttachmentUpload{attachment_for("f.bin", "application/octet-stream", content), content});
      }
      return e;
    }
  }
}

}  // namespace

TEST_CASE("canonical JSON has sorted keys and fixed formats") {
  auto h = open_header("TB", 7, ts("2002-08-14T12:00:00.000Z"));
  h.detector_mask = DetectorMask{0xab};
  CHECK(encode_canonical(h) ==
        R"({"beam_type":"Muons","detector_mask":"0x000000ab","end_time":null,"max_events":1000,"num_events":0,)"
        R"("partition":"TB","run_number":7,"start_time":"2002-08-14T12:00:00.000Z","status":"Open","trigger_type":"Physics"})");
}

TEST_CASE("run header round trip over random headers") {
  Gen g(3);
  for (int i = 0; i < 1000; ++i) {
    const auto h = g.header("TB", static_cast<std::uint64_t>(g.between(1, 1000)));
    CHECK(run_header_from_json(Json::parse(encode_canonical(h))) == h);
  }
}

TEST_CASE("envelope round trip over random envelopes") {
  Gen g(5);
  for (int i = 0; i < 2000; ++i) {
    const auto e = random_envelope(g);
    const auto line = encode_canonical(e);
    const auto back = parse_envelope(line);
    CHECK(back == e);
    CHECK(encode_canonical(back) == line);
  }
}

TEST_CASE("scalar text form round trip") {
  Gen g(9);
  for (int i = 0; i < 2000; ++i) {
    const auto v = random_scalar(g);
    const auto type = scalar_type_name(v);
    CHECK(scalar_from_text(type, scalar_to_text(v)) == v);
    CHECK(scalar_from_json(type, scalar_to_json(v)) == v);
  }
  CHECK(scalar_to_text(Scalar{0.1}) == "0.1");
  CHECK(scalar_to_text(Scalar{true}) == "true");
  CHECK(scalar_to_text(Scalar{ScalarList{std::vector<std::int64_t>{1, 2}}}) == "[1,2]");
}

TEST_CASE("the documented SOR line parses") {
  const auto e = parse_envelope(
      R"({"version":1,"kind":"SOR","partition":"TB","seq":1,"timestamp":"2002-08-14T12:00:00.000Z","payload":{"run_number":1,"max_events":1000,"trigger_type":"Physics","beam_type":"Muons","detector_mask":"0x00000001"}})");
  CHECK(e.kind == EnvelopeKind::SOR);
  CHECK(e.partition == "TB");
  CHECK(e.seq == 1);
  const auto& p = std::get<SorPayload>(e.payload);
  CHECK(p.run_number == 1);
  CHECK(p.max_events == 1000);
  CHECK(p.beam_type == "Muons");
  CHECK(p.detector_mask.bits == 1);
}

TEST_CASE("envelope error taxonomy") {
  const std::string sor =
      R"({"version":1,"kind":"SOR","partition":"TB","seq":1,"timestamp":"2002-08-14T12:00:00.000Z","payload":{"run_number":1,"max_events":1000,"trigger_type":"Physics","beam_type":"Muons","detector_mask":"0x00000001"}})";
  auto with = [&](const std::string& from, const std::string& to) {
    auto s = sor;
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  CHECK(code_of([&] { parse_envelope(with("\"version\":1", "\"version\":2")); }) == ErrorCode::VersionMismatch);
  CHECK(code_of([&] { parse_envelope("{not json"); }) == ErrorCode::MalformedJson);
  CHECK(code_of([&] { parse_envelope("[1,2]"); }) == ErrorCode::MalformedJson);
  CHECK(code_of([&] { parse_envelope(with("\"SOR\"", "\"XYZ\"")); }) == ErrorCode::UnknownKind);
  CHECK(code_of([&] { parse_envelope(with("\"0x00000001\"", "\"0x1\"")); }) == ErrorCode::PayloadSchemaError);
  CHECK(field_of([&] { parse_envelope(with("\"0x00000001\"", "\"0x1\"")); }) == "payload.detector_mask");
  CHECK(field_of([&] { parse_envelope(with("\"seq\":1", "\"seq\":-1")); }) == "seq");
  CHECK(field_of([&] { parse_envelope(with("\"partition\":\"TB\"", "\"partition\":\"T B\"")); }) == "partition");
  CHECK(field_of([&] { parse_envelope(with("\"max_events\":1000", "\"max_events\":1000,\"extra\":1")); }) ==
        "payload.extra");
}

TEST_CASE("payload must agree with the kind") {
  const std::string line =
      R"({"version":1,"kind":"IS","partition":"TB","seq":3,"timestamp":"2002-08-14T12:00:00.000Z","payload":{"message_name":"X","severity":"Error","application":"a","text":"t","timestamp":"2002-08-14T12:00:00.000Z","qualifiers":[]}})";
  CHECK(code_of([&] { parse_envelope(line); }) == ErrorCode::PayloadSchemaError);
}

TEST_CASE("declared digests pass through decoding untouched") {
  auto e = comment_envelope("TB", 1, base_time(), "x");
  std::get<CommentPayload>(e.payload).attachments.push_back(
      AttachmentUpload{attachment_for("a.txt", "text/plain", "abc"), "abd"});
  const auto back = parse_envelope(encode_canonical(e));
  const auto& upload = std::get<CommentPayload>(back.payload).attachments.at(0);
  CHECK(upload.content == "abd");
  CHECK(upload.meta.digest == sha256_hex("abc"));
}

TEST_CASE("seq salvage from broken lines") {
  CHECK(salvage_seq(R"({"version":2,"seq":41,"kind":"SOR"})") == 41);
  CHECK(salvage_seq(R"({"seq":"x"})") == 0);
  CHECK(salvage_seq("garbage") == 0);
}
