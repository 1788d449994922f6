#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <thread>

#include "smartenergy/runtime.hpp"

namespace smartenergy::api {

struct Request {
  std::string method;  // GET, POST, PUT
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct Response {
  int status = 200;
  std::string body;  // JSON
};

// Routes one request against the controller. Errors come back as
// {"error": <code>, "detail": <text>} with a 4xx status.
Response api_dispatch(runtime::Controller& controller, const Request& request);

// HTTP front end for api_dispatch.
class ApiServer {
 public:
  ApiServer(runtime::Controller& controller, const std::string& host, int port);
  ~ApiServer();

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  int port() const { return port_; }
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace smartenergy::api
