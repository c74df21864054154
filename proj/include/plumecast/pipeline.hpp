#ifndef PLUMECAST_PIPELINE_HPP
#define PLUMECAST_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>

#include <json.hpp>

#include "plumecast/config.hpp"
#include "plumecast/dataio.hpp"
#include "plumecast/metrics.hpp"
#include "plumecast/neural/train.hpp"
#include "plumecast/neural/unet.hpp"

namespace plumecast::pipeline {

struct GeneratedCase {
  dataio::CaseBundle bundle;  // p, k, i, vx, vy, s, s_o, T (f32-exact)
  PumpSet pumps;
  simkit::SolverReport darcy;
  simkit::SolverReport heat;
};

/// One synthetic datapoint: Perlin permeability, random pumps, the linear
/// initial head p, Darcy velocity, steady temperature and streamlines
/// traced on the simulated velocity.
GeneratedCase generate_case(const CaseConfig& cc, const tracer::TraceConfig& tc, std::uint64_t case_seed,
                            dataio::Role role);

std::uint64_t case_seed(std::uint64_t seed, dataio::Role role);

/// Pumps recovered from the one-hot channel "i".
PumpSet pumps_of(const dataio::CaseBundle& bundle, const CaseConfig& cc);

/// (s, s_o) for the given velocity field and pumps.
std::pair<ScalarField2D, ScalarField2D> streamline_channels(const VectorField2D& v, const PumpSet& pumps,
                                                            const tracer::TraceConfig& tc, bool fade);

/// Copy of `bundle` whose s and s_o follow the variant's fading rule.
dataio::CaseBundle with_streamlines(const dataio::CaseBundle& bundle, const CaseConfig& cc,
                                    const tracer::TraceConfig& tc, StreamlineVariant variant);

/// Largest centred window no larger than `extent` that the model accepts.
Region compatible_window(const neural::ConvNetConfig& cfg, const GridSpec& spec);
/// Region covered by the model output for an input window.
Region output_region(const neural::ConvNetConfig& cfg, const Region& input);

struct TrainedStep {
  neural::UNet<float> model;
  neural::FitResult fit;
  std::size_t box_length = 0;  // patch size actually used (0: full image)
  std::size_t samples = 0;
  nlohmann::json to_json() const;
};

using Log = std::ostream*;

TrainedStep train_step(const dataio::CaseBundle& train, const dataio::CaseBundle& val, const StepConfig& sc,
                       const std::vector<std::string>& inputs, const std::vector<std::string>& labels,
                       const dataio::NormStats& stats, const std::string& label, Log log = nullptr);

/// Velocity model on p, k, i.
TrainedStep train_step1(const dataio::CaseBundle& train, const dataio::CaseBundle& val, const StepConfig& sc,
                        const dataio::NormStats& stats, Log log = nullptr);
/// Temperature model; the bundles carry the Step-3 input channels.
TrainedStep train_step3(const dataio::CaseBundle& train, const dataio::CaseBundle& val, const StepConfig& sc,
                        StreamlineVariant variant, const dataio::NormStats& stats, Log log = nullptr);

/// Runs a model over a window of the case (tiled where exact) and returns
/// normalized output channels on the output region.
std::vector<ScalarField2D> apply_model(neural::UNet<float>& model, const dataio::CaseBundle& bundle,
                                       const std::vector<std::string>& inputs, const dataio::NormStats& stats,
                                       std::size_t tile_output, Region* out_region = nullptr);

struct StepOneOutput {
  Region input_region;
  Region v_region;
  VectorField2D v_pred;  // m/year on v_region
};

StepOneOutput run_step1(neural::UNet<float>& model_v, const dataio::CaseBundle& bundle,
                        const dataio::NormStats& stats, std::size_t tile_output);

/// The case cropped to the Step-1 output region with vx, vy, s, s_o taken
/// from v_pred (Step 2 traced on the predicted velocity).
dataio::CaseBundle predicted_inputs(const dataio::CaseBundle& bundle, const StepOneOutput& s1, const CaseConfig& cc,
                                    const tracer::TraceConfig& tc, StreamlineVariant variant);

struct Inference {
  Region v_region;
  Region t_region;       // in case coordinates
  VectorField2D v_pred;  // on v_region
  ScalarField2D s_pred, s_o_pred;
  ScalarField2D t_pred;  // degC on t_region
  ScalarField2D t_pred_normalized;
};

/// Sequential Step 1 -> Step 2 -> Step 3 on a case of any compatible size.
Inference infer(neural::UNet<float>& model_v, neural::UNet<float>& model_t, const dataio::CaseBundle& bundle,
                const PipelineConfig& cfg, const dataio::NormStats& stats);

struct Evaluation {
  metrics::MetricsReport step1;          // vx, vy on the Step-1 output region
  metrics::MetricsReport step3_on_vsim;  // T from simulated velocity inputs
  metrics::MetricsReport pipeline;       // T from predicted velocity inputs
  Region v_region, t_region;
  Inference inference;
  ScalarField2D t_isolated;  // degC on t_region
  nlohmann::json to_json() const;
};

/// Both Step-3 reports share the Step-1 output window and the Step-3 output
/// region, so their numbers are directly comparable.
Evaluation evaluate_pipeline(neural::UNet<float>& model_v, neural::UNet<float>& model_t,
                             const dataio::CaseBundle& bundle, const PipelineConfig& cfg,
                             const dataio::NormStats& stats);

struct ExperimentOptions {
  std::optional<std::filesystem::path> cache_dir;  // reuse cases and Step-1 models across runs
  bool render = true;
  Log log = nullptr;
};

struct ExperimentResult {
  nlohmann::json report;
  nlohmann::json manifest;
};

/// Full protocol: generate train/val/test cases, train both steps, evaluate
/// on the test case (and a scaled-up case when enabled), and write
/// manifest.json, report.json, checkpoints, fields and images to out_dir.
ExperimentResult run_experiment(const PipelineConfig& cfg, const std::filesystem::path& out_dir,
                                const ExperimentOptions& opts = {});

/// Stable 64-bit FNV-1a digest, hex encoded.
std::string file_digest(const std::filesystem::path& path);
std::string text_digest(const std::string& text);

}  // namespace plumecast::pipeline

#endif
