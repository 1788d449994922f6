#include "smartenergy/fleet_server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <stdexcept>

namespace smartenergy::devicenet {

namespace {

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

std::runtime_error socket_error(const char* what) {
  return std::runtime_error(std::string(what) + ": " + std::strerror(errno));
}

}  // namespace

FleetServer::FleetServer(Fleet& fleet, std::uint16_t port, const std::string& bind_address) : fleet_(fleet) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw socket_error("socket");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw std::invalid_argument("bad bind address " + bind_address);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 16) < 0) {
    const auto err = socket_error("bind/listen");
    ::close(listen_fd_);
    throw err;
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

FleetServer::~FleetServer() { stop(); }

void FleetServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(conn_mu_);
    for (const int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    threads.swap(connections_);
  }
  for (auto& t : threads) t.join();
}

void FleetServer::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(conn_mu_);
    if (!running_) {
      ::close(fd);
      return;
    }
    conn_fds_.push_back(fd);
    connections_.emplace_back([this, fd] { serve(fd); });
  }
}

void FleetServer::serve(int fd) {
  std::string pending;
  char buf[4096];
  while (running_) {
    const auto n = ::recv(fd, buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    pending.append(buf, static_cast<std::size_t>(n));
    std::size_t nl;
    while ((nl = pending.find('\n')) != std::string::npos) {
      const auto reply = fleet_.handle_command(std::string_view(pending).substr(0, nl));
      pending.erase(0, nl + 1);
      if (!send_all(fd, reply + '\n')) {
        ::close(fd);
        return;
      }
    }
  }
  ::close(fd);
}

TcpChannel::TcpChannel(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw socket_error("socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw std::invalid_argument("bad host " + host);
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    const auto err = socket_error("connect");
    ::close(fd_);
    throw err;
  }
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpChannel::~TcpChannel() {
  if (fd_ >= 0) ::close(fd_);
}

std::string TcpChannel::read_line() {
  char buf[4096];
  std::size_t nl;
  while ((nl = buffer_.find('\n')) == std::string::npos) {
    const auto n = ::recv(fd_, buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw std::runtime_error("fleet connection closed");
    buffer_.append(buf, static_cast<std::size_t>(n));
  }
  auto line = buffer_.substr(0, nl);
  buffer_.erase(0, nl + 1);
  return line;
}

std::string TcpChannel::exchange(std::string_view line) {
  std::lock_guard lock(mu_);
  std::string out(line);
  if (out.find('\n') != std::string::npos) throw std::invalid_argument("protocol lines must not embed LF");
  if (!send_all(fd_, out + '\n')) throw std::runtime_error("fleet connection closed");
  auto reply = read_line();
  if (reply.rfind("DEVICES ", 0) == 0) {
    unsigned n = 0;
    std::from_chars(reply.data() + 8, reply.data() + reply.size(), n);
    for (unsigned i = 0; i < n; ++i) reply += '\n' + read_line();
  }
  return reply;
}

}  // namespace smartenergy::devicenet
