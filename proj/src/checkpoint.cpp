#include "seg2hoi/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "seg2hoi/binary_io.hpp"
#include "seg2hoi/digest.hpp"

namespace seg2hoi {

namespace {

constexpr char kMagic[8] = {'S', '2', 'H', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

nlohmann::json categories_json(const HoiCategories& c) {
  nlohmann::json hois = nlohmann::json::array();
  for (const auto& h : c.hoi_classes) hois.push_back({h.verb, h.object});
  return {{"objects", c.objects}, {"verbs", c.verbs}, {"verb_roles", c.verb_roles}, {"hoi_classes", hois}};
}

HoiCategories categories_from_json(const nlohmann::json& j) {
  HoiCategories c;
  c.objects = j.at("objects").get<std::vector<std::string>>();
  c.verbs = j.at("verbs").get<std::vector<std::string>>();
  c.verb_roles = j.at("verb_roles").get<std::vector<std::string>>();
  for (const auto& h : j.at("hoi_classes")) c.hoi_classes.push_back({h.at(0).get<int>(), h.at(1).get<int>()});
  return c;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["config"] = format_config(ckpt.config);
  header["categories"] = categories_json(ckpt.categories);
  header["foundation_hash"] = ckpt.foundation_hash;
  header["step"] = ckpt.step;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& e : ckpt.params.entries()) {
    params.push_back({{"name", e.name}, {"rows", e.value.rows()}, {"cols", e.value.cols()}, {"trainable", e.trainable}});
  }
  header["params"] = std::move(params);

  std::ostringstream out(std::ios::binary);
  io::write_bytes(out, kMagic, sizeof(kMagic));
  io::write_pod(out, kVersion);
  io::write_string(out, header.dump());
  for (const auto& e : ckpt.params.entries()) {
    // Row-major so the payload does not depend on Eigen's storage order.
    for (Eigen::Index r = 0; r < e.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < e.value.cols(); ++c) io::write_pod<double>(out, e.value(r, c));
    }
  }
  return out.str();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  char magic[8];
  io::read_bytes(in, magic, sizeof(magic));
  if (!std::equal(magic, magic + 8, kMagic)) throw std::runtime_error("not a checkpoint (bad magic)");
  const auto version = io::read_pod<std::uint32_t>(in);
  if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const nlohmann::json header = nlohmann::json::parse(io::read_string(in));

  Checkpoint ckpt;
  ckpt.config = parse_config(header.at("config").get<std::string>());
  ckpt.categories = categories_from_json(header.at("categories"));
  ckpt.foundation_hash = header.at("foundation_hash").get<std::string>();
  ckpt.step = header.at("step").get<std::int64_t>();
  for (const auto& p : header.at("params")) {
    const auto rows = p.at("rows").get<Eigen::Index>();
    const auto cols = p.at("cols").get<Eigen::Index>();
    if (rows < 0 || cols < 0 || rows * cols > (Eigen::Index{1} << 28)) throw std::runtime_error("bad parameter shape");
    nn::Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = io::read_pod<double>(in);
    }
    ckpt.params.add(p.at("name").get<std::string>(), std::move(m), p.at("trainable").get<bool>());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes after checkpoint payload");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot move checkpoint into " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize_checkpoint(ss.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string checkpoint_hash(const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  return sha256_hex({reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()});
}

void restore_parameters(nn::ParameterStore& dst, const nn::ParameterStore& src) {
  if (dst.size() != src.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(src.size()) + " parameters, model expects " +
                             std::to_string(dst.size()));
  }
  for (size_t i = 0; i < dst.size(); ++i) {
    auto& d = dst.entries()[i];
    const auto& s = src.entries()[i];
    if (d.name != s.name || d.value.rows() != s.value.rows() || d.value.cols() != s.value.cols() ||
        d.trainable != s.trainable) {
      throw std::runtime_error("parameter mismatch at '" + d.name + "' (checkpoint has '" + s.name + "')");
    }
    d.value = s.value;
  }
}

}  // namespace seg2hoi
