#pragma once

// Publisher simulator and storage benchmarks.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "obk/envelope.hpp"
#include "obk/ingest.hpp"
#include "obk/storage.hpp"

namespace obk {

struct WorkloadSpec {
  std::uint64_t num_runs = 500;  // per publisher
  std::uint64_t mrs_per_run = 10;
  std::uint64_t is_per_run = 20;
  std::uint64_t comments_per_run = 1;
  std::uint64_t is_attrs_per_object = 4;
  std::uint64_t publishers = 1;
  std::uint64_t seed = 1;
};

// Throws InvalidValue (publishers must be at least 1).
void validate_workload(const WorkloadSpec& spec);

// One envelope sequence per publisher. Publisher i (0-based) owns partition
// "BENCH<i+1>" and opens runs 1..num_runs in order; each run is SOR, the
// shuffled MRS/IS/COMMENT body, EOR. Same spec, same stream.
using PublisherStream = std::vector<MessageEnvelope>;
std::vector<PublisherStream> generate_stream(const WorkloadSpec& spec);
std::string bench_partition(std::uint64_t publisher_index);

// Canonical wire lines of every publisher's stream, publisher by publisher.
std::string encode_stream(const std::vector<PublisherStream>& streams);

struct ReplayCounts {
  std::uint64_t acked_ok = 0;
  std::uint64_t rejected = 0;
  std::uint64_t records = 0;      // MRS, IS, COMMENT and orphans
  std::uint64_t transitions = 0;  // SOR and EOR
};

// Feeds the streams straight into handle_envelope, one publisher after the
// other, each as its own connection.
ReplayCounts replay_stream(Repository& repo, const std::vector<PublisherStream>& streams,
                           OrphanPolicy policy = OrphanPolicy::Reject);

// Records stored in the repository (run records, comments and orphans).
std::uint64_t count_persisted_records(const Repository& repo);

struct PublisherResult {
  std::uint64_t acked_ok = 0;
  std::uint64_t rejected = 0;
  std::uint64_t acked_records = 0;  // ok replies to MRS/IS/COMMENT
  std::vector<double> is_e2e_us;    // request/reply latency of every IS envelope
};

// Sends the stream over one connection in lockstep (one envelope in flight).
PublisherResult run_publisher(const std::string& address, const PublisherStream& stream);

// ---- latency ---------------------------------------------------------------

struct LatencySample {
  EnvelopeKind op = EnvelopeKind::SOR;
  std::uint64_t run_index = 0;  // 1-based position of the run in the stream
  double latency_us = 0;
};

struct LatencySummary {
  EnvelopeKind op = EnvelopeKind::SOR;
  std::size_t count = 0;
  double min_us = 0;
  double max_us = 0;
  double mean_us = 0;
  double median_us = 0;
};

struct LatencyReport {
  BackendId backend = BackendId::FileStore;
  SyncMode sync = SyncMode::Buffered;
  std::vector<LatencySample> samples;
  std::vector<LatencySummary> summary;  // SOR, EOR, COMMENT, IS, MRS (those present)
  double sor_slope_us_per_run = 0;      // least-squares slope of SOR latency vs run index
};

// Builds a fresh repository at `root` and times every storage call of the
// first publisher's stream. Other publishers in the workload are ignored.
LatencyReport run_latency_bench(BackendId backend, const std::filesystem::path& root, const WorkloadSpec& spec,
                                SyncMode sync = SyncMode::Buffered);

std::vector<double> latencies_of(const LatencyReport& report, EnvelopeKind op);
double median(std::vector<double> values);
double percentile(std::vector<double> values, double p);
double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y);

// operation,run_index,latency_us
void write_latency_series_csv(const LatencyReport& report, std::ostream& out);
// operation,count,min_us,max_us,mean_us,median_us
void write_latency_summary_csv(const LatencyReport& report, std::ostream& out);
// Whitespace-separated columns: run_index sor_us eor_us; '#' header line.
void write_latency_gnuplot(const LatencyReport& report, std::ostream& out);

// ---- scalability -----------------------------------------------------------

struct ScalePoint {
  std::uint64_t publishers = 0;
  std::uint64_t is_count = 0;
  double mean_store_us = 0;
  double p95_store_us = 0;
  double mean_e2e_us = 0;
  double p95_e2e_us = 0;
  std::uint64_t acked_ok = 0;   // ok replies to MRS/IS/COMMENT
  std::uint64_t persisted = 0;  // records found in the repository afterwards
  std::uint64_t rejected = 0;
};

// For each publisher count: fresh repository under root_base, in-process
// acquisition server, that many concurrent publishers each streaming
// `spec` into its own partition.
std::vector<ScalePoint> run_scalability_bench(BackendId backend, const std::filesystem::path& root_base,
                                              WorkloadSpec spec, const std::vector<std::uint64_t>& publisher_counts,
                                              SyncMode sync = SyncMode::Buffered);

// publishers,is_count,mean_store_us,p95_store_us,mean_e2e_us,p95_e2e_us,acked_ok,persisted,rejected
void write_scale_csv(const std::vector<ScalePoint>& points, std::ostream& out);

// ---- backend comparison ----------------------------------------------------

struct CompareReport {
  LatencyReport file;
  LatencyReport relational;
  bool exports_equal = false;
  std::size_t export_bytes = 0;
  std::string first_difference;  // empty when equal
};

CompareReport compare_backends(const std::filesystem::path& root_base, const WorkloadSpec& spec,
                               SyncMode sync = SyncMode::Buffered);

// operation,file_median_us,relational_median_us,file_mean_us,relational_mean_us
void write_compare_csv(const CompareReport& report, std::ostream& out);

}  // namespace obk
