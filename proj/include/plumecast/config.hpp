#ifndef PLUMECAST_CONFIG_HPP
#define PLUMECAST_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "plumecast/dataio.hpp"
#include "plumecast/grid.hpp"
#include "plumecast/neural/train.hpp"
#include "plumecast/neural/unet.hpp"
#include "plumecast/simkit.hpp"
#include "plumecast/synth.hpp"
#include "plumecast/tracer.hpp"

namespace plumecast::pipeline {

inline constexpr int kSchemaVersion = 1;

enum class StreamlineVariant { both, s_only, so_only, none, not_faded };
std::string_view variant_name(StreamlineVariant v);
StreamlineVariant variant_from_name(std::string_view s);

struct Ablations {
  bool train_in_sequence = false;
  bool zero_padding = false;
  bool no_partitioning = false;
  StreamlineVariant streamline_variant = StreamlineVariant::both;
};

/// Short names used on the command line: baseline, train_in_sequence,
/// zero_padding, no_partitioning, s_only, so_only, no_streamlines, not_faded.
Ablations ablation_from_name(std::string_view name);
std::string ablation_label(const Ablations& a);
const std::vector<std::string>& ablation_names();

struct StepConfig {
  neural::ConvNetConfig model;
  neural::TrainConfig train;
  dataio::PatchSpec patch;
  bool full_image = false;  // set by the no_partitioning ablation
};

struct CaseConfig {
  GridSpec grid{256, 256, 5.0};
  std::size_t pump_count = 4;
  std::size_t min_spacing = 10;
  std::size_t border = 0;
  double injection_rate = 0.00024;
  double injection_delta_t = 5.0;
  synth::PerlinConfig perlin;  // seed is derived per case
  simkit::HydroParams hydro;
  simkit::ThermalParams thermal;
};

struct ScalingConfig {
  std::size_t factor = 2;  // linear: factor^2 times the area
  bool enabled = true;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  CaseConfig cases;
  tracer::TraceConfig trace;
  StepConfig step1;
  StepConfig step3;
  Ablations ablations;
  std::size_t tile_output = 128;
  ScalingConfig scaling;

  PipelineConfig();
  void validate() const;
  nlohmann::json to_json() const;
  /// Strict: unknown fields and type mismatches raise ConfigError with the
  /// dotted field path. "base" selects the starting point ("full" or
  /// "3dp-desk") that the remaining fields override.
  static PipelineConfig from_json(const nlohmann::json& j);
};

/// Settings shrunk to run the whole protocol on one CPU core in minutes.
PipelineConfig desk_protocol();

/// Effective step configs after ablations (padding, partitioning) and
/// channel signatures are applied.
std::vector<std::string> step1_inputs();
std::vector<std::string> step1_labels();
std::vector<std::string> step3_inputs(StreamlineVariant v);
std::vector<std::string> step3_labels();
StepConfig effective_step1(const PipelineConfig& cfg);
StepConfig effective_step3(const PipelineConfig& cfg);

}  // namespace plumecast::pipeline

#endif
