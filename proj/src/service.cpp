#include "seg2hoi/service.hpp"

#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

#include "seg2hoi/digest.hpp"

namespace seg2hoi {

namespace {

using nlohmann::json;

struct HttpError : std::runtime_error {
  int status;
  HttpError(int s, const std::string& msg) : std::runtime_error(msg), status(s) {}
};

HttpResponse json_response(int status, const json& body) { return {status, body.dump()}; }

HttpResponse error_response(int status, const std::string& message) {
  return json_response(status, {{"error", {{"code", status}, {"message", message}}}});
}

std::string image_id_of(const std::vector<std::uint8_t>& png) { return sha256_hex(png); }

json parse_body(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw HttpError(400, std::string("request body is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
  return j;
}

std::vector<std::uint8_t> decode_base64_field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_string()) throw HttpError(400, std::string("'") + key + "' must be a base64 string");
  try {
    return base64_decode(it->get<std::string>());
  } catch (const std::exception&) {
    throw HttpError(400, std::string("'") + key + "' is not valid base64");
  }
}

Image decode_image(const std::vector<std::uint8_t>& png, int max_side) {
  Image img;
  try {
    img = decode_png(png);
  } catch (const std::exception& e) {
    throw HttpError(422, std::string("image could not be decoded: ") + e.what());
  }
  if (img.width > max_side || img.height > max_side) {
    throw HttpError(413, "image exceeds " + std::to_string(max_side) + " pixels per side");
  }
  if (img.width < 4 || img.height < 4 || img.width % 4 != 0 || img.height % 4 != 0) {
    throw HttpError(422, "image width and height must be positive multiples of 4");
  }
  return img;
}

int read_top_k(const json& j, int max_top_k, int fallback) {
  const auto it = j.find("top_k");
  if (it == j.end()) return fallback;
  if (!it->is_number_integer()) throw HttpError(400, "'top_k' must be an integer");
  const int k = it->get<int>();
  if (k < 1 || k > max_top_k) throw HttpError(400, "'top_k' must lie in [1, " + std::to_string(max_top_k) + "]");
  return k;
}

}  // namespace

Service::Service(std::shared_ptr<const Predictor> predictor, ServiceOptions options)
    : predictor_(std::move(predictor)), options_(options) {
  if (!predictor_) throw std::invalid_argument("Service needs a predictor");
}

Service::~Service() { stop(); }

std::string Service::store_image(const Image& image, const std::string& id) {
  std::lock_guard<std::mutex> lock(store_mutex_);
  if (images_.emplace(id, image).second) {
    image_order_.push_back(id);
    while (static_cast<int>(image_order_.size()) > options_.max_stored_images) {
      images_.erase(image_order_.front());
      image_order_.pop_front();
    }
  }
  return id;
}

bool Service::lookup_image(const std::string& id, Image& out) {
  std::lock_guard<std::mutex> lock(store_mutex_);
  const auto it = images_.find(id);
  if (it == images_.end()) return false;
  out = it->second;
  return true;
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  const Predictor& p = *predictor_;
  const HoiCategories& cats = p.categories();
  try {
    if (body.size() > options_.max_body_bytes) throw HttpError(413, "request body too large");
    if (method == "GET" && path == "/v1/health") return json_response(200, {{"status", "ok"}});
    if (method == "GET" && path == "/v1/meta") {
      json hois = json::array();
      for (const auto& h : cats.hoi_classes) hois.push_back({{"verb", h.verb}, {"object", h.object}});
      return json_response(
          200, {{"objects", cats.objects},
                {"verbs", cats.verbs},
                {"hoi_classes", hois},
                {"templates", {{"object", p.text_bank().object_sentences}, {"verb", p.text_bank().verb_sentences}}},
                {"checkpoint_hash", p.checkpoint_hash()},
                {"foundation_hash", p.foundation().parameter_hash()},
                {"embedder", p.embedder().version()},
                {"mask_stride", 4}});
    }
    if (method != "POST") throw HttpError(404, "no route for " + method + " " + path);

    const bool is_detect = path == "/v1/detect";
    const bool is_visual = path == "/v1/prompt/visual";
    const bool is_text = path == "/v1/prompt/text";
    if (path == "/v1/images") {
      const json req = parse_body(body);
      const auto png = decode_base64_field(req, "image_png_base64");
      const Image img = decode_image(png, options_.max_image_side);
      const std::string id = store_image(img, image_id_of(png));
      return json_response(200, {{"image_id", id}, {"width", img.width}, {"height", img.height}});
    }
    if (!is_detect && !is_visual && !is_text) throw HttpError(404, "no route for POST " + path);

    const json req = parse_body(body);
    Image image;
    std::string image_id;
    if (req.contains("image_id")) {
      if (!req["image_id"].is_string()) throw HttpError(400, "'image_id' must be a string");
      image_id = req["image_id"].get<std::string>();
      if (!lookup_image(image_id, image)) throw HttpError(404, "unknown image_id");
    } else if (req.contains("image_png_base64")) {
      const auto png = decode_base64_field(req, "image_png_base64");
      image = decode_image(png, options_.max_image_side);
      image_id = image_id_of(png);
    } else {
      throw HttpError(400, "request needs 'image_id' or 'image_png_base64'");
    }

    std::vector<std::pair<int, int>> points;
    std::string text;
    if (is_visual) {
      const auto it = req.find("points");
      if (it == req.end() || !it->is_array() || it->empty()) throw HttpError(400, "'points' must be a non-empty array");
      for (const auto& pt : *it) {
        if (!pt.is_array() || pt.size() != 2 || !pt[0].is_number() || !pt[1].is_number()) {
          throw HttpError(400, "each point must be [x, y]");
        }
        const double x = pt[0].get<double>(), y = pt[1].get<double>();
        if (!(x >= 0 && y >= 0 && x < image.width && y < image.height)) {
          throw HttpError(400, "point outside the image bounds");
        }
        points.emplace_back(static_cast<int>(x), static_cast<int>(y));
      }
    }
    if (is_text) {
      const auto it = req.find("text");
      if (it == req.end() || !it->is_string()) throw HttpError(400, "'text' must be a string");
      text = it->get<std::string>();
      if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw HttpError(400, "'text' must not be empty");
    }
    const int top_k = read_top_k(req, options_.max_top_k, p.config().eval.top_k);

    const Inference inf = p.infer(image);
    std::vector<Quadruplet> quads;
    if (is_detect) {
      quads = p.detect(inf, top_k);
    } else {
      const auto q = is_visual ? p.prompt_visual(inf, image.width, image.height, points) : p.prompt_text(inf, text);
      if (q) quads.push_back(*q);
    }
    json arr = json::array();
    for (const auto& q : quads) arr.push_back(quadruplet_json(q, cats, image.width, image.height));
    const char* kind = is_detect ? "detect" : (is_visual ? "visual" : "text");
    return json_response(
        200, {{"kind", kind},
              {"image", {{"id", image_id}, {"width", image.width}, {"height", image.height}}},
              {"grid",
               {{"height", inf.foundation.grid_height},
                {"width", inf.foundation.grid_width},
                {"stride_x", image.width / std::max(1, inf.foundation.grid_width)},
                {"stride_y", image.height / std::max(1, inf.foundation.grid_height)}}},
              {"model", {{"checkpoint_hash", p.checkpoint_hash()}, {"foundation_hash", p.foundation().parameter_hash()}}},
              {"quadruplets", std::move(arr)}});
  } catch (const HttpError& e) {
    return error_response(e.status, e.what());
  } catch (const std::invalid_argument& e) {
    return error_response(400, e.what());
  } catch (const std::out_of_range& e) {
    return error_response(400, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

void Service::install_routes() {
  server_ = std::make_unique<httplib::Server>();
  server_->set_payload_max_length(options_.max_body_bytes + 1);
  auto forward = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  for (const char* route : {"/v1/images", "/v1/detect", "/v1/prompt/visual", "/v1/prompt/text"}) {
    server_->Post(route, forward);
  }
  server_->Get("/v1/health", forward);
  server_->Get("/v1/meta", forward);
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server_->Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

void Service::serve(const std::string& host, int port) {
  install_routes();
  if (!server_->listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

int Service::start(const std::string& host) {
  install_routes();
  const int port = server_->bind_to_any_port(host);
  if (port <= 0) throw std::runtime_error("cannot bind a port on " + host);
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void Service::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace seg2hoi
