#include "plumecast/field_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "plumecast/error.hpp"

namespace plumecast {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'L', 'G', 'F', '1'};

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <typename T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const fs::path& path, const std::vector<unsigned char>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

void write_lgf1(const fs::path& path, const LgfImage& image) {
  image.spec.validate();
  const std::size_t n = image.channels * image.spec.cells();
  if (image.channels < 1 || image.values.size() != n) throw ShapeError("LGF1 payload size mismatch");
  std::vector<unsigned char> bytes(kMagic, kMagic + 4);
  bytes.reserve(24 + 4 * n);
  put_le(bytes, static_cast<std::uint32_t>(image.spec.width));
  put_le(bytes, static_cast<std::uint32_t>(image.spec.height));
  put_le(bytes, static_cast<std::uint32_t>(image.channels));
  put_le(bytes, image.spec.cell_size);
  for (float v : image.values) put_le(bytes, v);
  dump(path, bytes);
}

LgfImage read_lgf1(const fs::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError(path.string() + ": not an LGF1 file");
  }
  LgfImage img;
  img.spec.width = get_le<std::uint32_t>(&bytes[4]);
  img.spec.height = get_le<std::uint32_t>(&bytes[8]);
  img.channels = get_le<std::uint32_t>(&bytes[12]);
  img.spec.cell_size = get_le<double>(&bytes[16]);
  try {
    img.spec.validate();
  } catch (const Error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  const std::size_t n = img.channels * img.spec.cells();
  if (img.channels < 1 || bytes.size() != 24 + 4 * n) {
    throw IoError(path.string() + ": payload size does not match header");
  }
  img.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) img.values[i] = get_le<float>(&bytes[24 + 4 * i]);
  return img;
}

fs::path meta_path(const fs::path& lgf_path) {
  auto p = lgf_path;
  p.replace_extension(".meta.json");
  return p;
}

void write_meta(const fs::path& path, const FieldMeta& meta) {
  nlohmann::json j;
  j["unit"] = std::string(unit_name(meta.unit));
  j["norm_min"] = meta.norm_min ? nlohmann::json(*meta.norm_min) : nlohmann::json(nullptr);
  j["norm_max"] = meta.norm_max ? nlohmann::json(*meta.norm_max) : nlohmann::json(nullptr);
  j["provenance"] = meta.provenance;
  write_json_file(path, j);
}

FieldMeta read_meta(const fs::path& path) {
  const auto j = read_json_file(path);
  FieldMeta m;
  try {
    m.unit = unit_from_name(j.at("unit").get<std::string>());
    if (j.contains("norm_min") && !j["norm_min"].is_null()) m.norm_min = j["norm_min"].get<double>();
    if (j.contains("norm_max") && !j["norm_max"].is_null()) m.norm_max = j["norm_max"].get<double>();
    if (j.contains("provenance")) m.provenance = j["provenance"];
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return m;
}

ScalarField2D quantize_f32(const ScalarField2D& field) {
  std::vector<double> v(field.values().begin(), field.values().end());
  for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
  return {field.spec(), field.unit(), std::move(v)};
}

VectorField2D quantize_f32(const VectorField2D& field) {
  return {quantize_f32(field.vx_field()), quantize_f32(field.vy_field())};
}

void save_field(const fs::path& path, const ScalarField2D& field, FieldMeta meta) {
  LgfImage img{field.spec(), 1, {}};
  img.values.reserve(field.spec().cells());
  for (double v : field.values()) img.values.push_back(static_cast<float>(v));
  write_lgf1(path, img);
  meta.unit = field.unit();
  write_meta(meta_path(path), meta);
}

ScalarField2D load_field(const fs::path& path) {
  const auto img = read_lgf1(path);
  if (img.channels != 1) throw IoError(path.string() + ": expected one channel, found " + std::to_string(img.channels));
  Unit unit = Unit::unitless;
  if (fs::exists(meta_path(path))) unit = read_meta(meta_path(path)).unit;
  return {img.spec, unit, std::vector<double>(img.values.begin(), img.values.end())};
}

void save_vector_field(const fs::path& path, const VectorField2D& v, FieldMeta meta) {
  LgfImage img{v.spec(), 2, {}};
  img.values.reserve(2 * v.spec().cells());
  for (double x : v.vx()) img.values.push_back(static_cast<float>(x));
  for (double y : v.vy()) img.values.push_back(static_cast<float>(y));
  write_lgf1(path, img);
  meta.unit = Unit::meters_per_year;
  write_meta(meta_path(path), meta);
}

VectorField2D load_vector_field(const fs::path& path) {
  const auto img = read_lgf1(path);
  if (img.channels != 2) throw IoError(path.string() + ": expected two channels");
  const std::size_t n = img.spec.cells();
  return {img.spec, std::vector<double>(img.values.begin(), img.values.begin() + static_cast<std::ptrdiff_t>(n)),
          std::vector<double>(img.values.begin() + static_cast<std::ptrdiff_t>(n), img.values.end())};
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  const std::string text = j.dump(2) + "\n";
  dump(path, std::vector<unsigned char>(text.begin(), text.end()));
}

}  // namespace plumecast
