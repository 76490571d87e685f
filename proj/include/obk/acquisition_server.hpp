#pragma once

// Newline-delimited JSON acquisition server. Each accepted line is answered
// with "ok <seq>" or "err <seq> <CODE>".

#include <atomic>
#include <condition_variable>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "obk/ingest.hpp"

namespace obk {

struct AcquisitionConfig {
  std::string listen = "127.0.0.1:0";  // host:port, port 0 picks a free one
  SubscriptionFilter filter;
  OrphanPolicy orphan_policy = OrphanPolicy::Reject;
  std::size_t max_line_bytes = 64u << 20;
};

// Reported for every envelope that reached handle_envelope.
struct IngestSample {
  EnvelopeKind kind = EnvelopeKind::SOR;
  std::string partition;
  bool ok = false;
  std::chrono::nanoseconds store_latency{0};
};

struct IngestCounters {
  std::uint64_t acked_ok = 0;
  std::uint64_t rejected = 0;
  std::uint64_t records_persisted = 0;  // MRS, IS, COMMENT and orphans
  std::uint64_t transitions = 0;        // SOR and EOR
};

// Splits "host:port"; throws InvalidValue.
std::pair<std::string, std::uint16_t> parse_host_port(std::string_view address);

class AcquisitionServer {
 public:
  AcquisitionServer(Repository& repo, AcquisitionConfig config);
  ~AcquisitionServer();
  AcquisitionServer(const AcquisitionServer&) = delete;
  AcquisitionServer& operator=(const AcquisitionServer&) = delete;

  // Binds and starts accepting in a background thread.
  void start();
  // Closes the listener and every connection, then joins all threads.
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

  std::uint16_t port() const { return port_; }
  std::string address() const;

  // Must be set before start(); called from connection threads.
  void set_observer(std::function<void(const IngestSample&)> observer) { observer_ = std::move(observer); }

  IngestCounters counters() const;

  // The per-line pipeline (parse, filter, handle) without a socket; returns
  // the reply line without '\n'. Thread-safe.
  std::string handle_line(std::string_view line, ConnectionId connection);

 private:
  struct Slot {
    std::mutex mutex;
    std::optional<PartitionState> state;
  };

  void accept_loop();
  void serve(int fd, ConnectionId connection);
  Slot& slot(const std::string& partition);

  Repository& repo_;
  AcquisitionConfig config_;
  std::function<void(const IngestSample&)> observer_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;

  std::mutex slots_mutex_;
  std::map<std::string, std::unique_ptr<Slot>> slots_;

  std::mutex connections_mutex_;
  std::map<ConnectionId, int> connection_fds_;
  std::map<ConnectionId, std::thread> connection_threads_;
  std::vector<ConnectionId> finished_;
  ConnectionId next_connection_ = 1;

  std::mutex stop_mutex_;
  std::condition_variable stopped_cv_;
  bool stopped_ = false;

  std::atomic<std::uint64_t> acked_ok_{0};
  std::atomic<std::uint64_t> rejected_{0};
  std::atomic<std::uint64_t> persisted_{0};
  std::atomic<std::uint64_t> transitions_{0};
};

// Blocking client for the line protocol.
class EnvelopeClient {
 public:
  EnvelopeClient() = default;
  ~EnvelopeClient();
  EnvelopeClient(const EnvelopeClient&) = delete;
  EnvelopeClient& operator=(const EnvelopeClient&) = delete;
  EnvelopeClient(EnvelopeClient&& other) noexcept;
  EnvelopeClient& operator=(EnvelopeClient&& other) noexcept;

  // Throws Io.
  static EnvelopeClient connect(std::string_view address);

  void send_line(std::string_view line);
  // Blocks for the next reply line; throws Io on EOF.
  std::string read_reply();
  std::string request(std::string_view line) {
    send_line(line);
    return read_reply();
  }
  std::string send(const MessageEnvelope& envelope) { return request(encode_canonical(envelope)); }
  void close();

 private:
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace obk
