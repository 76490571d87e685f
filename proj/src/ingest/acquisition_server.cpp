#include "obk/acquisition_server.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <condition_variable>
#include <cstring>

#include "obk/error.hpp"

namespace obk {
namespace {

[[noreturn]] void socket_error(const std::string& what) {
  throw Error(ErrorCode::Io, what + ": " + std::strerror(errno));
}

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

struct AddrInfo {
  addrinfo* list = nullptr;
  ~AddrInfo() {
    if (list) freeaddrinfo(list);
  }
};

void resolve(std::string_view address, bool passive, AddrInfo& out) {
  const auto [host, port] = parse_host_port(address);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  const auto port_text = std::to_string(port);
  const int rc = getaddrinfo(host.empty() ? nullptr : host.c_str(), port_text.c_str(), &hints, &out.list);
  if (rc != 0) throw Error(ErrorCode::Io, "cannot resolve " + std::string(address) + ": " + gai_strerror(rc));
}

}  // namespace

std::pair<std::string, std::uint16_t> parse_host_port(std::string_view address) {
  const auto colon = address.rfind(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorCode::InvalidValue, "address must be host:port", "listen");
  }
  auto host = address.substr(0, colon);
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  const auto port_text = address.substr(colon + 1);
  unsigned port = 0;
  const auto res = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (port_text.empty() || res.ec != std::errc{} || res.ptr != port_text.data() + port_text.size() || port > 65535) {
    throw Error(ErrorCode::InvalidValue, "invalid port in '" + std::string(address) + "'", "listen");
  }
  return {std::string(host), static_cast<std::uint16_t>(port)};
}

AcquisitionServer::AcquisitionServer(Repository& repo, AcquisitionConfig config)
    : repo_(repo), config_(std::move(config)) {}

AcquisitionServer::~AcquisitionServer() { stop(); }

void AcquisitionServer::start() {
  AddrInfo ai;
  resolve(config_.listen, true, ai);
  for (auto* a = ai.list; a; a = a->ai_next) {
    const int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 128) == 0) {
      listen_fd_ = fd;
      break;
    }
    ::close(fd);
  }
  if (listen_fd_ < 0) socket_error("cannot listen on " + config_.listen);
  sockaddr_storage bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port
                                            : reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

std::string AcquisitionServer::address() const {
  return parse_host_port(config_.listen).first + ":" + std::to_string(port_);
}

void AcquisitionServer::stop() {
  if (running_.exchange(false)) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
    if (accept_thread_.joinable()) accept_thread_.join();
    std::map<ConnectionId, std::thread> threads;
    {
      std::lock_guard guard(connections_mutex_);
      for (const auto& [id, fd] : connection_fds_) ::shutdown(fd, SHUT_RDWR);
      threads.swap(connection_threads_);
      finished_.clear();
    }
    for (auto& [id, t] : threads) t.join();
  }
  std::lock_guard guard(stop_mutex_);
  stopped_ = true;
  stopped_cv_.notify_all();
}

void AcquisitionServer::wait() {
  std::unique_lock guard(stop_mutex_);
  stopped_cv_.wait(guard, [this] { return stopped_; });
}

IngestCounters AcquisitionServer::counters() const {
  return IngestCounters{acked_ok_.load(), rejected_.load(), persisted_.load(), transitions_.load()};
}

void AcquisitionServer::accept_loop() {
  while (running_) {
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return;
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard guard(connections_mutex_);
    if (!running_) {
      ::close(fd);
      return;
    }
    for (const auto done : finished_) {
      auto it = connection_threads_.find(done);
      if (it != connection_threads_.end()) {
        it->second.join();
        connection_threads_.erase(it);
      }
    }
    finished_.clear();
    const auto id = next_connection_++;
    connection_fds_[id] = fd;
    connection_threads_.emplace(id, std::thread([this, fd, id] { serve(fd, id); }));
  }
}

void AcquisitionServer::serve(int fd, ConnectionId connection) {
  std::string buffer;
  char chunk[65536];
  bool open = true;
  while (open) {
    const auto n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t start = 0;
    while (true) {
      const auto nl = buffer.find('\n', start);
      if (nl == std::string::npos) break;
      const auto reply = handle_line(std::string_view(buffer).substr(start, nl - start), connection);
      start = nl + 1;
      if (!send_all(fd, reply + "\n")) {
        open = false;
        break;
      }
    }
    buffer.erase(0, start);
    if (buffer.size() > config_.max_line_bytes) {
      rejected_++;
      send_all(fd, "err 0 MalformedJson\n");
      break;
    }
  }
  std::lock_guard guard(connections_mutex_);
  connection_fds_.erase(connection);
  finished_.push_back(connection);
  ::close(fd);
}

AcquisitionServer::Slot& AcquisitionServer::slot(const std::string& partition) {
  std::lock_guard guard(slots_mutex_);
  auto& s = slots_[partition];
  if (!s) s = std::make_unique<Slot>();
  return *s;
}

std::string AcquisitionServer::handle_line(std::string_view line, ConnectionId connection) {
  MessageEnvelope e;
  try {
    e = parse_envelope(line);
  } catch (const Error& err) {
    rejected_++;
    return "err " + std::to_string(salvage_seq(line)) + " " + std::string(to_string(err.code()));
  }
  const auto seq = std::to_string(e.seq);
  if (!filter_accepts(config_.filter, e)) {
    rejected_++;
    return "err " + seq + " Filtered";
  }

  auto& s = slot(e.partition);
  IngestSample sample;
  sample.kind = e.kind;
  sample.partition = e.partition;
  std::string reply;
  {
    std::lock_guard guard(s.mutex);
    try {
      if (!s.state) s.state = load_partition_state(repo_, e.partition);
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const auto effect = handle_envelope(*s.state, e, connection, repo_, config_.orphan_policy);
        sample.store_latency = std::chrono::steady_clock::now() - t0;
        sample.ok = true;
        if (effect.kind == EffectKind::RunBegun || effect.kind == EffectKind::RunEnded) {
          transitions_++;
        } else {
          persisted_++;
        }
        acked_ok_++;
        reply = "ok " + seq;
      } catch (const Error&) {
        sample.store_latency = std::chrono::steady_clock::now() - t0;
        throw;
      }
    } catch (const Error& err) {
      rejected_++;
      reply = "err " + seq + " " + std::string(to_string(err.code()));
    } catch (const std::exception&) {
      rejected_++;
      reply = "err " + seq + " Io";
    }
  }
  if (observer_) observer_(sample);
  return reply;
}

EnvelopeClient::~EnvelopeClient() { close(); }

EnvelopeClient::EnvelopeClient(EnvelopeClient&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), buffer_(std::move(other.buffer_)) {}

EnvelopeClient& EnvelopeClient::operator=(EnvelopeClient&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
    buffer_ = std::move(other.buffer_);
  }
  return *this;
}

EnvelopeClient EnvelopeClient::connect(std::string_view address) {
  AddrInfo ai;
  resolve(address, false, ai);
  EnvelopeClient c;
  for (auto* a = ai.list; a; a = a->ai_next) {
    const int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      c.fd_ = fd;
      return c;
    }
    ::close(fd);
  }
  socket_error("cannot connect to " + std::string(address));
}

void EnvelopeClient::send_line(std::string_view line) {
  std::string data(line);
  data += '\n';
  if (fd_ < 0 || !send_all(fd_, data)) socket_error("send");
}

std::string EnvelopeClient::read_reply() {
  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      auto line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    char chunk[4096];
    const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(ErrorCode::Io, "connection closed by server");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

void EnvelopeClient::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

}  // namespace obk
