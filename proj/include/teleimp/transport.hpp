#pragma once

// Datagram channels: a real UDP socket and an in-process loopback pair
// with optional loss injection and capture for tests.

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace teleimp::net {

using Bytes = std::vector<std::uint8_t>;

class DatagramChannel {
 public:
  virtual ~DatagramChannel() = default;
  virtual void send(std::span<const std::uint8_t> datagram) = 0;
  /// Waits up to `timeout`; nullopt when nothing arrived.
  virtual std::optional<Bytes> receive(std::chrono::milliseconds timeout) = 0;
};

/// UDP socket bound to `local_port` (0 = ephemeral) on 127.0.0.1 or any
/// address, sending to a fixed peer. If no peer is configured, replies go to
/// the source of the last received datagram.
class UdpChannel : public DatagramChannel {
 public:
  UdpChannel(std::uint16_t local_port, const std::string& bind_host = "127.0.0.1");
  ~UdpChannel() override;
  UdpChannel(const UdpChannel&) = delete;
  UdpChannel& operator=(const UdpChannel&) = delete;

  void set_peer(const std::string& host, std::uint16_t port);
  std::uint16_t local_port() const { return local_port_; }

  void send(std::span<const std::uint8_t> datagram) override;
  std::optional<Bytes> receive(std::chrono::milliseconds timeout) override;

 private:
  int fd_ = -1;
  std::uint16_t local_port_ = 0;
  std::mutex peer_mutex_;
  bool has_peer_ = false;
  std::array<std::uint8_t, 16> peer_storage_{};  // sockaddr_in
};

/// One end of an in-process link. Datagrams are delivered in order unless
/// the sender's drop filter discards them.
class LoopbackChannel : public DatagramChannel {
 public:
  void send(std::span<const std::uint8_t> datagram) override;
  std::optional<Bytes> receive(std::chrono::milliseconds timeout) override;

  /// Returns true to drop an outgoing datagram.
  void set_drop_filter(std::function<bool(std::span<const std::uint8_t>)> f);
  /// Every datagram handed to send(), including dropped ones.
  std::vector<Bytes> sent() const;
  std::size_t pending() const;

 private:
  friend std::pair<std::shared_ptr<LoopbackChannel>, std::shared_ptr<LoopbackChannel>> make_loopback_pair();
  struct Queue {
    mutable std::mutex mutex;
    std::condition_variable cv;
    std::deque<Bytes> items;
  };
  std::shared_ptr<Queue> inbox_;
  std::shared_ptr<Queue> outbox_;
  mutable std::mutex send_mutex_;
  std::function<bool(std::span<const std::uint8_t>)> drop_;
  std::vector<Bytes> sent_;
};

std::pair<std::shared_ptr<LoopbackChannel>, std::shared_ptr<LoopbackChannel>> make_loopback_pair();

}  // namespace teleimp::net
