#include "obk/error.hpp"
#include "obk/ingest.hpp"

namespace obk {

std::string_view to_string(OrphanPolicy policy) { return policy == OrphanPolicy::Reject ? "reject" : "store"; }

std::optional<OrphanPolicy> parse_orphan_policy(std::string_view text) {
  if (text == "reject") return OrphanPolicy::Reject;
  if (text == "store" || text == "orphan-store") return OrphanPolicy::Store;
  return std::nullopt;
}

PartitionState load_partition_state(const Repository& repo, std::string_view partition) {
  PartitionState s;
  s.partition = std::string(partition);
  s.open_run = repo.open_run(partition);
  return s;
}

namespace {

Comment to_comment(const CommentPayload& p, Timestamp created_at, std::vector<std::string>& contents) {
  Comment c;
  c.author = p.author;
  c.text = p.text;
  c.origin = p.origin;
  c.created_at = created_at;
  for (const auto& a : p.attachments) {
    c.attachments.push_back(a.meta);
    contents.push_back(a.content);
  }
  return c;
}

[[noreturn]] void no_open_run(const MessageEnvelope& e) {
  throw Error(ErrorCode::NoOpenRun, "partition " + e.partition + " has no open run for " +
                                        std::string(to_string(e.kind)));
}

}  // namespace

StoreEffect handle_envelope(PartitionState& state, const MessageEnvelope& e, ConnectionId connection,
                            Repository& repo, OrphanPolicy policy) {
  auto [it, fresh] = state.last_seq_by_connection.try_emplace(connection, e.seq);
  if (!fresh) {
    if (e.seq <= it->second) {
      throw Error(ErrorCode::SeqRegression,
                  "seq " + std::to_string(e.seq) + " does not follow " + std::to_string(it->second), "seq");
    }
    it->second = e.seq;
  }

  // Keeps the cached open run in step with storage when another writer
  // (force-close, a second process) changed it underneath us.
  auto resync = [&](const Error& err) {
    if (err.code() == ErrorCode::RunClosed || err.code() == ErrorCode::UnknownRun ||
        err.code() == ErrorCode::NotOpen) {
      state.open_run = repo.open_run(state.partition);
    }
  };

  switch (e.kind) {
    case EnvelopeKind::SOR: {
      const auto& p = std::get<SorPayload>(e.payload);
      RunHeader h;
      h.partition = e.partition;
      h.run_number = p.run_number;
      h.start_time = e.timestamp;
      h.status = RunStatus::Open;
      h.max_events = p.max_events;
      h.trigger_type = p.trigger_type;
      h.beam_type = p.beam_type;
      h.detector_mask = p.detector_mask;
      repo.begin_run(h);
      state.open_run = p.run_number;
      return StoreEffect{EffectKind::RunBegun, p.run_number, 0};
    }
    case EnvelopeKind::EOR: {
      if (!state.open_run) no_open_run(e);
      const auto& p = std::get<EorPayload>(e.payload);
      const auto run = *state.open_run;
      try {
        repo.end_run(e.partition, run, p.status, p.num_events, e.timestamp);
      } catch (const Error& err) {
        resync(err);
        throw;
      }
      state.open_run.reset();
      return StoreEffect{EffectKind::RunEnded, run, 0};
    }
    case EnvelopeKind::MRS:
    case EnvelopeKind::IS:
    case EnvelopeKind::COMMENT: break;
  }

  std::vector<std::string> contents;
  if (!state.open_run) {
    if (policy == OrphanPolicy::Reject) no_open_run(e);
    std::uint64_t id = 0;
    switch (e.kind) {
      case EnvelopeKind::MRS: id = repo.append_orphan(e.partition, std::get<MrsMessage>(e.payload)); break;
      case EnvelopeKind::IS: id = repo.append_orphan(e.partition, std::get<IsInfo>(e.payload)); break;
      default: {
        const auto c = to_comment(std::get<CommentPayload>(e.payload), e.timestamp, contents);
        id = repo.append_orphan(e.partition, c, contents);
      }
    }
    return StoreEffect{EffectKind::OrphanStored, 0, id};
  }

  const auto run = *state.open_run;
  try {
    std::uint64_t id = 0;
    switch (e.kind) {
      case EnvelopeKind::MRS: id = repo.append_mrs(e.partition, run, std::get<MrsMessage>(e.payload)); break;
      case EnvelopeKind::IS: id = repo.append_is(e.partition, run, std::get<IsInfo>(e.payload)); break;
      default: {
        const auto c = to_comment(std::get<CommentPayload>(e.payload), e.timestamp, contents);
        id = repo.append_comment(e.partition, run, c, contents);
      }
    }
    return StoreEffect{EffectKind::RecordAppended, run, id};
  } catch (const Error& err) {
    resync(err);
    throw;
  }
}

}  // namespace obk
