#ifndef PLUMECAST_DATAIO_HPP
#define PLUMECAST_DATAIO_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "plumecast/grid.hpp"
#include "plumecast/neural/tensor.hpp"

namespace plumecast::dataio {

/// Physical range of one channel; normalization maps it affinely onto [0, 1].
struct ChannelRange {
  double min = 0.0;
  double max = 1.0;

  bool degenerate() const { return !(min < max); }
  double span() const { return max - min; }
  double normalize(double v) const { return (v - min) / (max - min); }
  double denormalize(double v) const { return min + v * (max - min); }
};

/// Per-channel ranges, computed on training cases and frozen afterwards.
struct NormStats {
  std::map<std::string, ChannelRange> channels;

  const ChannelRange& at(const std::string& channel) const;
  nlohmann::json to_json() const;
  static NormStats from_json(const nlohmann::json& j);
};

/// Ranges over the union of the given fields, per channel name. Channels that
/// are constant in the data are widened to [v, v + 1] and reported.
NormStats compute_stats(const std::vector<std::map<std::string, ScalarField2D>>& cases,
                        std::vector<std::string>* degenerate = nullptr);

/// Throws DomainError for degenerate ranges.
ScalarField2D normalize(const ScalarField2D& field, const ChannelRange& range);
ScalarField2D denormalize(const ScalarField2D& field, const ChannelRange& range, Unit unit);

struct PatchSpec {
  std::size_t box_length = 256;
  std::size_t skip_per_direction = 16;

  void validate(const GridSpec& spec) const;
};

/// Patch origins (row, col) = (r * skip, c * skip) with r < floor((H - box) / skip)
/// and c < floor((W - box) / skip); an axis with no such origin gets one
/// patch at 0 (box equal to the domain).
std::vector<Cell> partition(const GridSpec& spec, const PatchSpec& ps);
std::size_t partition_count(const GridSpec& spec, const PatchSpec& ps);

enum class Role { train, val, test, scaling };
std::string role_name(Role r);
Role role_from_name(const std::string& name);

inline const std::vector<std::string> kAllChannels = {"p", "k", "i", "vx", "vy", "s", "s_o", "T"};

struct CaseBundle {
  Role role = Role::train;
  GridSpec spec{};
  std::map<std::string, ScalarField2D> fields;
  nlohmann::json provenance = nlohmann::json::object();

  const ScalarField2D& field(const std::string& channel) const;
  bool has(const std::string& channel) const { return fields.count(channel) != 0; }
  /// Inserts a field; throws ShapeError when its grid differs from the case grid.
  void set(const std::string& channel, ScalarField2D field);
  CaseBundle crop(const Region& r) const;
};

/// `case/{channel}.lgf1` plus `case/meta.json`.
void save_case(const std::filesystem::path& dir, const CaseBundle& bundle,
               const std::optional<NormStats>& stats = std::nullopt);
CaseBundle load_case(const std::filesystem::path& dir);

/// Central crop of a label window of size `in` to the network output size.
struct Crop {
  std::size_t before = 0;
  std::size_t after = 0;
};
Crop central_crop(std::size_t in, std::size_t out);

struct SampleSet {
  neural::Tensor<float> inputs;  // N x C_in x box x box
  neural::Tensor<float> labels;  // N x C_out x out x out
  std::vector<Cell> origins;
};

/// Extracts normalized multi-channel inputs and centrally cropped labels.
/// `patch` = nullopt takes the whole domain as one sample. `output_size`
/// maps an input window size to the network output size.
SampleSet assemble(const CaseBundle& bundle, const std::vector<std::string>& inputs,
                   const std::vector<std::string>& labels, const NormStats& stats,
                   const std::optional<PatchSpec>& patch, const std::function<std::size_t(std::size_t)>& output_size);

/// Normalized channels of the whole case as a 1 x C x H x W tensor.
neural::Tensor<float> stack_channels(const CaseBundle& bundle, const std::vector<std::string>& channels,
                                     const NormStats& stats);

}  // namespace plumecast::dataio

#endif
