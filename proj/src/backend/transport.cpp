#include "teleimp/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "teleimp/error.hpp"
#include "teleimp/wire.hpp"

namespace teleimp::net {

namespace {

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &a.sin_addr) != 1)
    throw Error(ErrorKind::Configuration, "not an IPv4 address: " + host);
  return a;
}

}  // namespace

UdpChannel::UdpChannel(std::uint16_t local_port, const std::string& bind_host) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw Error(ErrorKind::Io, std::string("socket: ") + std::strerror(errno));
  const sockaddr_in addr = make_addr(bind_host, local_port);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd_);
    throw Error(ErrorKind::Io, "bind " + bind_host + ":" + std::to_string(local_port) + ": " + why);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  local_port_ = ntohs(bound.sin_port);
}

UdpChannel::~UdpChannel() {
  if (fd_ >= 0) ::close(fd_);
}

void UdpChannel::set_peer(const std::string& host, std::uint16_t port) {
  const sockaddr_in a = make_addr(host, port);
  std::lock_guard lk(peer_mutex_);
  std::memcpy(peer_storage_.data(), &a, sizeof(a));
  has_peer_ = true;
}

void UdpChannel::send(std::span<const std::uint8_t> datagram) {
  sockaddr_in peer{};
  {
    std::lock_guard lk(peer_mutex_);
    if (!has_peer_) return;  // nobody to talk to yet
    std::memcpy(&peer, peer_storage_.data(), sizeof(peer));
  }
  // loss is tolerated by the protocol; a failed send is not an error here
  (void)::sendto(fd_, datagram.data(), datagram.size(), 0, reinterpret_cast<const sockaddr*>(&peer), sizeof(peer));
}

std::optional<Bytes> UdpChannel::receive(std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  const int ready = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (ready <= 0) return std::nullopt;
  // one byte more than the largest valid datagram so oversize input is visible
  Bytes buf(wire::kMaxDatagram + 1);
  sockaddr_in from{};
  socklen_t len = sizeof(from);
  const auto n = ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&from), &len);
  if (n < 0) return std::nullopt;
  buf.resize(static_cast<std::size_t>(n));
  {
    std::lock_guard lk(peer_mutex_);
    if (!has_peer_) {
      std::memcpy(peer_storage_.data(), &from, sizeof(from));
      has_peer_ = true;
    }
  }
  return buf;
}

std::pair<std::shared_ptr<LoopbackChannel>, std::shared_ptr<LoopbackChannel>> make_loopback_pair() {
  auto a = std::make_shared<LoopbackChannel>();
  auto b = std::make_shared<LoopbackChannel>();
  auto qa = std::make_shared<LoopbackChannel::Queue>();
  auto qb = std::make_shared<LoopbackChannel::Queue>();
  a->inbox_ = qa;
  a->outbox_ = qb;
  b->inbox_ = qb;
  b->outbox_ = qa;
  return {a, b};
}

void LoopbackChannel::send(std::span<const std::uint8_t> datagram) {
  {
    std::lock_guard lk(send_mutex_);
    sent_.emplace_back(datagram.begin(), datagram.end());
    if (drop_ && drop_(datagram)) return;
  }
  {
    std::lock_guard lk(outbox_->mutex);
    outbox_->items.emplace_back(datagram.begin(), datagram.end());
  }
  outbox_->cv.notify_one();
}

std::optional<Bytes> LoopbackChannel::receive(std::chrono::milliseconds timeout) {
  std::unique_lock lk(inbox_->mutex);
  if (timeout.count() <= 0 && inbox_->items.empty()) return std::nullopt;  // poll without a timed wait
  if (!inbox_->cv.wait_for(lk, timeout, [&] { return !inbox_->items.empty(); })) return std::nullopt;
  Bytes b = std::move(inbox_->items.front());
  inbox_->items.pop_front();
  return b;
}

void LoopbackChannel::set_drop_filter(std::function<bool(std::span<const std::uint8_t>)> f) {
  std::lock_guard lk(send_mutex_);
  drop_ = std::move(f);
}

std::vector<Bytes> LoopbackChannel::sent() const {
  std::lock_guard lk(send_mutex_);
  return sent_;
}

std::size_t LoopbackChannel::pending() const {
  std::lock_guard lk(inbox_->mutex);
  return inbox_->items.size();
}

}  // namespace teleimp::net
