// SPDX-License-Identifier: Apache-2.0
#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/netlink.hpp"

namespace vil::net {

void LoopbackLink::send(std::span<const std::uint8_t> datagram) {
  std::lock_guard lock(mu_);
  queue_.emplace_back(datagram.begin(), datagram.end());
}

std::optional<Bytes> LoopbackLink::receive(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    {
      std::lock_guard lock(mu_);
      if (!queue_.empty()) {
        Bytes b = std::move(queue_.front());
        queue_.pop_front();
        return b;
      }
    }
    if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  }
}

UdpLink::UdpLink(std::uint16_t bind_port, std::string peer_host, std::uint16_t peer_port, bool bind_any)
    : peer_host_(std::move(peer_host)), peer_port_(peer_port) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw IoError(fmt::format("udp socket: {}", std::strerror(errno)));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(bind_port);
  addr.sin_addr.s_addr = htonl(bind_any ? INADDR_ANY : INADDR_LOOPBACK);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const int err = errno;
    ::close(fd_);
    throw IoError(fmt::format("udp bind port {}: {}", bind_port, std::strerror(err)));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  local_port_ = ntohs(addr.sin_port);
}

UdpLink::~UdpLink() {
  if (fd_ >= 0) ::close(fd_);
}

void UdpLink::send(std::span<const std::uint8_t> datagram) {
  if (peer_port_ == 0) throw InvalidArgument("udp link has no peer");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(peer_port_);
  const std::string host = peer_host_.empty() || peer_host_ == "localhost" ? "127.0.0.1" : peer_host_;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw InvalidArgument(fmt::format("udp peer '{}' is not an IPv4 address", peer_host_));
  }
  // Datagram loss is part of the contract; send errors are not fatal.
  ::sendto(fd_, datagram.data(), datagram.size(), 0, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
}

std::optional<Bytes> UdpLink::receive(std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  const int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (rc <= 0) return std::nullopt;
  Bytes buf(65536);
  const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
  if (n < 0) return std::nullopt;
  buf.resize(static_cast<std::size_t>(n));
  return buf;
}

PoseStreamMessage PoseStreamSender::send(const StateVector& state, std::uint32_t frame_id) {
  PoseStreamMessage m;
  m.sequence = next_seq_++;
  m.timestamp_us = static_cast<std::uint64_t>(std::llround(std::max(0.0, state.timestamp) * 1e6));
  m.frame_id = frame_id;
  m.pose = state.pose;
  const Bytes b = encode_pose_stream(m);
  link_.send(b);
  return m;
}

std::optional<PoseStreamMessage> PoseStreamReceiver::ingest(std::span<const std::uint8_t> datagram) {
  ++counters_.received;
  PoseStreamMessage m;
  try {
    m = decode_pose_stream(datagram);
  } catch (const ProtocolError&) {
    ++counters_.malformed;
    return std::nullopt;
  }
  if (!order_.accept(m.sequence)) {
    ++counters_.stale;
    return std::nullopt;
  }
  ++counters_.accepted;
  return m;
}

std::optional<PoseStreamMessage> PoseStreamReceiver::receive(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    auto d = link_.receive(std::max(left, std::chrono::milliseconds(0)));
    if (!d) return std::nullopt;
    if (auto m = ingest(*d)) return m;
  }
}

}  // namespace vil::net
