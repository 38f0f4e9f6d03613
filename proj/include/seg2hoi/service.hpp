#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "seg2hoi/predictor.hpp"

namespace httplib {
class Server;
}

namespace seg2hoi {

struct ServiceOptions {
  size_t max_body_bytes = 16u << 20;
  int max_image_side = 1024;
  int max_stored_images = 64;
  int max_top_k = 1000;
};

struct HttpResponse {
  int status = 200;
  std::string body;
};

/// JSON-over-HTTP front end of a Predictor. `handle` is the whole request
/// pipeline; the socket server only forwards to it.
class Service {
 public:
  explicit Service(std::shared_ptr<const Predictor> predictor, ServiceOptions options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body);

  /// Blocks until stop().
  void serve(const std::string& host, int port);
  /// Starts on a free port in a background thread and returns the port.
  int start(const std::string& host = "127.0.0.1");
  void stop();

 private:
  std::shared_ptr<const Predictor> predictor_;
  ServiceOptions options_;
  std::mutex store_mutex_;
  std::map<std::string, Image> images_;
  std::deque<std::string> image_order_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;

  void install_routes();
  std::string store_image(const Image& image, const std::string& id);
  bool lookup_image(const std::string& id, Image& out);
};

}  // namespace seg2hoi
