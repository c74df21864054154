#ifndef PLUMECAST_FIELD_IO_HPP
#define PLUMECAST_FIELD_IO_HPP

#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "plumecast/grid.hpp"

namespace plumecast {

// LGF1 layout (all little-endian):
//   "LGF1" | u32 width | u32 height | u32 channels | f64 cell_size |
//   channels * height * width f32 values, channel-major, row-major inside.

struct LgfImage {
  GridSpec spec{};
  std::size_t channels = 1;
  std::vector<float> values;
};

void write_lgf1(const std::filesystem::path& path, const LgfImage& image);
LgfImage read_lgf1(const std::filesystem::path& path);

struct FieldMeta {
  Unit unit = Unit::unitless;
  std::optional<double> norm_min;
  std::optional<double> norm_max;
  nlohmann::json provenance = nlohmann::json::object();
};

/// "<dir>/<name>.lgf1" -> "<dir>/<name>.meta.json".
std::filesystem::path meta_path(const std::filesystem::path& lgf_path);
void write_meta(const std::filesystem::path& path, const FieldMeta& meta);
FieldMeta read_meta(const std::filesystem::path& path);

/// Rounds every value through f32, i.e. to what an LGF1 file can hold.
ScalarField2D quantize_f32(const ScalarField2D& field);
VectorField2D quantize_f32(const VectorField2D& field);

/// Writes the field and its sidecar. The sidecar unit always mirrors the field.
void save_field(const std::filesystem::path& path, const ScalarField2D& field, FieldMeta meta = {});
/// Reads a single-channel file; the unit comes from the sidecar when present.
ScalarField2D load_field(const std::filesystem::path& path);

void save_vector_field(const std::filesystem::path& path, const VectorField2D& v, FieldMeta meta = {});
VectorField2D load_vector_field(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace plumecast

#endif
