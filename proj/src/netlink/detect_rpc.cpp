// SPDX-License-Identifier: Apache-2.0
#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include <fmt/format.h>

#include "vil/bytes.hpp"
#include "vil/error.hpp"
#include "vil/netlink.hpp"

namespace vil::net {
namespace {

using Clock = std::chrono::steady_clock;

int ms_until(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return static_cast<int>(std::max<long long>(0, left));
}

/// Writes everything before `deadline`; false on timeout or error.
bool write_all(int fd, std::span<const std::uint8_t> b, Clock::time_point deadline) {
  std::size_t off = 0;
  while (off < b.size()) {
    const ssize_t n = ::send(fd, b.data() + off, b.size() - off, MSG_NOSIGNAL | MSG_DONTWAIT);
    if (n > 0) {
      off += static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) return false;
    pollfd p{fd, POLLOUT, 0};
    if (::poll(&p, 1, ms_until(deadline)) <= 0) return false;
  }
  return true;
}

sockaddr_in loopback_or(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  const std::string h = host.empty() || host == "localhost" ? "127.0.0.1" : host;
  if (::inet_pton(AF_INET, h.c_str(), &addr.sin_addr) != 1) {
    throw InvalidArgument(fmt::format("'{}' is not an IPv4 address", host));
  }
  return addr;
}

}  // namespace

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string::npos || colon + 1 >= endpoint.size()) {
    throw InvalidArgument(fmt::format("endpoint '{}' is not host:port", endpoint));
  }
  unsigned port = 0;
  const char* first = endpoint.data() + colon + 1;
  const char* last = endpoint.data() + endpoint.size();
  auto [p, ec] = std::from_chars(first, last, port);
  if (ec != std::errc{} || p != last || port == 0 || port > 65535) {
    throw InvalidArgument(fmt::format("endpoint '{}' has an invalid port", endpoint));
  }
  return {endpoint.substr(0, colon), static_cast<std::uint16_t>(port)};
}

DetectClient::DetectClient(std::string host, std::uint16_t port, std::chrono::milliseconds timeout)
    : host_(std::move(host)), port_(port), timeout_(timeout) {
  if (timeout.count() <= 0) throw InvalidArgument("detector timeout must be positive");
  loopback_or(host_, port_);
}

DetectClient::~DetectClient() { reset(); }

void DetectClient::reset() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

bool DetectClient::ensure_connected(Clock::time_point deadline) {
  if (fd_ >= 0) return true;
  const sockaddr_in addr = loopback_or(host_, port_);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) return false;
  ::fcntl(fd_, F_SETFL, ::fcntl(fd_, F_GETFL) | O_NONBLOCK);
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  if (::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    if (errno != EINPROGRESS) {
      reset();
      return false;
    }
    pollfd p{fd_, POLLOUT, 0};
    int err = 0;
    socklen_t len = sizeof err;
    if (::poll(&p, 1, ms_until(deadline)) <= 0 || ::getsockopt(fd_, SOL_SOCKET, SO_ERROR, &err, &len) != 0 || err) {
      reset();
      return false;
    }
  }
  return true;
}

std::optional<DetectResponse> DetectClient::call(const DetectRequest& req) {
  ++counters_.calls;
  const auto deadline = Clock::now() + timeout_;
  auto give_up = [&](std::string_view why) -> std::optional<DetectResponse> {
    ++counters_.timeouts;
    fmt::print(stderr, "warning: detector {}:{} request {} {}; treating as no detections\n", host_, port_,
               req.sequence, why);
    reset();
    return std::nullopt;
  };

  if (!ensure_connected(deadline)) return give_up("could not connect");
  const Bytes msg = frame_message(encode_detect_request(req));
  if (!write_all(fd_, msg, deadline)) return give_up("could not be sent before the deadline");

  StreamAssembler in;
  std::uint8_t buf[4096];
  for (;;) {
    std::optional<Bytes> body;
    try {
      body = in.next();
    } catch (const ProtocolError&) {
      ++counters_.protocol_errors;
      reset();
      throw;
    }
    if (body) {
      try {
        DetectResponse resp = decode_detect_response(*body);
        if (resp.sequence != req.sequence) {
          throw ProtocolError(fmt::format("response sequence {} does not echo request {}; message: {}", resp.sequence,
                                          req.sequence, bytes::hex_dump(*body)));
        }
        return resp;
      } catch (const ProtocolError&) {
        ++counters_.protocol_errors;
        reset();
        throw;
      }
    }
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, ms_until(deadline)) <= 0) return give_up("timed out");
    const ssize_t n = ::recv(fd_, buf, sizeof buf, MSG_DONTWAIT);
    if (n == 0) return give_up("saw the connection close");
    if (n < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
      return give_up("failed to read");
    }
    in.feed({buf, static_cast<std::size_t>(n)});
  }
}

DetectServer::DetectServer(std::uint16_t port, Handler handler) : handler_(std::move(handler)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw IoError(fmt::format("tcp socket: {}", std::strerror(errno)));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = loopback_or("127.0.0.1", port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 4) != 0) {
    const int err = errno;
    ::close(listen_fd_);
    throw IoError(fmt::format("tcp listen on port {}: {}", port, std::strerror(err)));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  thread_ = std::jthread([this] { run(); });
}

DetectServer::~DetectServer() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
  ::close(listen_fd_);
}

void DetectServer::run() {
  std::vector<int> clients;
  std::vector<StreamAssembler> assemblers;
  std::uint8_t buf[65536];
  while (!stop_) {
    std::vector<pollfd> fds{{listen_fd_, POLLIN, 0}};
    for (int c : clients) fds.push_back({c, POLLIN, 0});
    if (::poll(fds.data(), fds.size(), 20) <= 0) continue;
    if (fds[0].revents & POLLIN) {
      const int c = ::accept(listen_fd_, nullptr, nullptr);
      if (c >= 0) {
        clients.push_back(c);
        assemblers.emplace_back();
      }
    }
    for (std::size_t i = fds.size() - 1; i >= 1; --i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const std::size_t ci = i - 1;
      bool drop = false;
      const ssize_t n = ::recv(clients[ci], buf, sizeof buf, 0);
      if (n <= 0) {
        drop = true;
      } else {
        try {
          assemblers[ci].feed({buf, static_cast<std::size_t>(n)});
          while (auto msg = assemblers[ci].next()) {
            auto reply = handler_(*msg);
            ++served_;
            if (reply) {
              const Bytes framed = frame_message(*reply);
              if (!write_all(clients[ci], framed, Clock::now() + std::chrono::seconds(5))) drop = true;
            }
          }
        } catch (const std::exception& e) {
          fmt::print(stderr, "warning: detect server dropping client: {}\n", e.what());
          drop = true;
        }
      }
      if (drop) {
        ::close(clients[ci]);
        clients.erase(clients.begin() + static_cast<std::ptrdiff_t>(ci));
        assemblers.erase(assemblers.begin() + static_cast<std::ptrdiff_t>(ci));
      }
    }
  }
  for (int c : clients) ::close(c);
}

RemoteDetector::RemoteDetector(std::string host, std::uint16_t port, std::chrono::milliseconds timeout,
                               PixelFormat format)
    : client_(std::move(host), port, timeout), format_(format) {}

std::vector<pose::KeypointObservation> RemoteDetector::detect(const splat::Frame& frame) const {
  std::lock_guard lock(mu_);
  const DetectRequest req = make_detect_request(frame, next_seq_++, format_);
  try {
    auto resp = client_.call(req);
    if (!resp) return {};
    return std::move(resp->objects);
  } catch (const ProtocolError& e) {
    fmt::print(stderr, "warning: detector response rejected: {}\n", e.what());
    return {};
  }
}

RpcCounters RemoteDetector::counters() const {
  std::lock_guard lock(mu_);
  return client_.counters();
}

}  // namespace vil::net
