#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "smartenergy/devicenet.hpp"

namespace smartenergy::devicenet {

// Serves the fleet protocol over TCP, one thread per connection. Each
// received line gets exactly one reply (LIST replies span several lines).
class FleetServer {
 public:
  // Port 0 picks an ephemeral port; see port().
  FleetServer(Fleet& fleet, std::uint16_t port = 0, const std::string& bind_address = "127.0.0.1");
  ~FleetServer();

  FleetServer(const FleetServer&) = delete;
  FleetServer& operator=(const FleetServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

 private:
  void accept_loop();
  void serve(int fd);

  Fleet& fleet_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{true};
  std::thread acceptor_;
  std::mutex conn_mu_;
  std::vector<std::thread> connections_;
  std::vector<int> conn_fds_;
};

// Client side of the protocol over one persistent TCP connection.
class TcpChannel final : public DeviceChannel {
 public:
  TcpChannel(const std::string& host, std::uint16_t port);
  ~TcpChannel() override;

  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  std::string exchange(std::string_view line) override;

 private:
  std::string read_line();

  int fd_ = -1;
  std::string buffer_;
  std::mutex mu_;
};

}  // namespace smartenergy::devicenet
