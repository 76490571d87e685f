#pragma once

// Envelope parsing, subscription filtering and the per-partition run
// lifecycle that routes accepted envelopes into a repository.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "obk/codec.hpp"
#include "obk/envelope.hpp"
#include "obk/storage.hpp"

namespace obk {

// One wire line (without the trailing newline). Throws MalformedJson,
// UnknownKind, VersionMismatch or PayloadSchemaError with the field path.
MessageEnvelope parse_envelope(std::string_view line);

// Best-effort seq of a line that failed to parse; 0 when absent.
std::uint64_t salvage_seq(std::string_view line);

struct SubscriptionFilter {
  std::optional<std::set<std::string>> partitions;  // nullopt: every partition
  std::set<EnvelopeKind> kinds{EnvelopeKind::SOR, EnvelopeKind::EOR, EnvelopeKind::MRS, EnvelopeKind::IS,
                               EnvelopeKind::COMMENT};
  std::optional<Severity> min_severity;               // MRS only
  std::optional<std::set<std::string>> is_servers;    // IS only
};

bool filter_accepts(const SubscriptionFilter& filter, const MessageEnvelope& envelope);

// {"partitions": "*" | [..], "kinds": [..], "min_severity": "Warning", "is_servers": [..]};
// every key optional. Throws InvalidValue.
SubscriptionFilter filter_from_json(const Json& j);
Json to_json(const SubscriptionFilter& filter);
SubscriptionFilter load_filter(const std::filesystem::path& path);

enum class OrphanPolicy { Reject, Store };
std::string_view to_string(OrphanPolicy policy);
// "reject", "store" (alias "orphan-store").
std::optional<OrphanPolicy> parse_orphan_policy(std::string_view text);

using ConnectionId = std::uint64_t;

struct PartitionState {
  std::string partition;
  std::optional<std::uint64_t> open_run;
  std::map<ConnectionId, std::uint64_t> last_seq_by_connection;
};

// State mirroring what the repository already holds for the partition.
PartitionState load_partition_state(const Repository& repo, std::string_view partition);

enum class EffectKind { RunBegun, RunEnded, RecordAppended, OrphanStored };

struct StoreEffect {
  EffectKind kind = EffectKind::RecordAppended;
  std::uint64_t run_number = 0;  // 0 for orphans
  std::uint64_t record_id = 0;   // record, comment or orphan id; 0 for transitions
};

// Applies one filtered envelope. The connection's seq is checked first and
// recorded even if the envelope is later rejected. Throws SeqRegression,
// DuplicateRun, AlreadyOpen, NoOpenRun and any storage error.
StoreEffect handle_envelope(PartitionState& state, const MessageEnvelope& envelope, ConnectionId connection,
                            Repository& repo, OrphanPolicy policy);

}  // namespace obk
