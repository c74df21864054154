#include "plumecast/neural/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>

#include "plumecast/error.hpp"

namespace plumecast::neural {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'L', 'G', 'C', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const fs::path& path, UNet<float>& model, const nlohmann::json& extra) {
  nlohmann::json header = extra.is_object() ? extra : nlohmann::json::object();
  header["config"] = model.config().to_json();
  if (!header.contains("epoch")) header["epoch"] = 0;
  if (!header.contains("metrics")) header["metrics"] = nlohmann::json::object();
  const auto state = model.state();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : state) tensors.push_back({{"name", e.name}, {"shape", e.shape}});
  header["tensors"] = tensors;

  const std::string text = header.dump();
  std::string bytes(kMagic, 4);
  put_u32(bytes, static_cast<std::uint32_t>(text.size()));
  bytes += text;
  for (const auto& e : state) {
    for (double v : e.values) put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Checkpoint read_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < 8 || bytes.compare(0, 4, kMagic, 4) != 0) throw IoError(path.string() + ": not an LGC1 checkpoint");
  const std::size_t hlen = get_u32(bytes, 4);
  if (bytes.size() < 8 + hlen) throw IoError(path.string() + ": truncated header");
  Checkpoint ck;
  try {
    ck.header = nlohmann::json::parse(bytes.substr(8, hlen));
    ck.config = ConvNetConfig::from_json(ck.header.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed header: " + e.what());
  }
  std::size_t at = 8 + hlen;
  for (const auto& t : ck.header.at("tensors")) {
    StateEntry e{t.at("name").get<std::string>(), t.at("shape").get<std::vector<std::size_t>>(), {}};
    const std::size_t n =
        std::accumulate(e.shape.begin(), e.shape.end(), std::size_t{1}, std::multiplies<>());
    if (bytes.size() < at + 4 * n) throw IoError(path.string() + ": truncated tensor '" + e.name + "'");
    e.values.resize(n);
    for (std::size_t i = 0; i < n; ++i, at += 4) e.values[i] = std::bit_cast<float>(get_u32(bytes, at));
    ck.state.push_back(std::move(e));
  }
  if (at != bytes.size()) throw IoError(path.string() + ": trailing bytes after tensors");
  return ck;
}

UNet<float> load_model(const fs::path& path, Checkpoint* info) {
  Checkpoint ck = read_checkpoint(path);
  UNet<float> model(ck.config, 0);
  model.load_state(ck.state);
  if (info) *info = std::move(ck);
  return model;
}

}  // namespace plumecast::neural
