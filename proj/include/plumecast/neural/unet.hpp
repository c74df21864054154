#ifndef PLUMECAST_NEURAL_UNET_HPP
#define PLUMECAST_NEURAL_UNET_HPP

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "plumecast/neural/layers.hpp"
#include "plumecast/neural/tensor.hpp"

namespace plumecast::neural {

struct ConvNetConfig {
  std::size_t depth = 4;
  std::size_t init_features = 32;
  std::size_t kernel_size = 5;
  Padding padding = Padding::none;
  bool repeat_inner = false;
  Activation activation = Activation::relu;
  Norm norm = Norm::batch;
  std::size_t in_channels = 3;
  std::size_t out_channels = 2;

  void validate() const;
  nlohmann::json to_json() const;
  static ConvNetConfig from_json(const nlohmann::json& j);
  bool operator==(const ConvNetConfig&) const = default;
};

/// Output spatial size for an input of `input` cells along one axis; throws
/// ShapeError naming the divisibility requirement when incompatible.
std::size_t output_size(const ConvNetConfig& cfg, std::size_t input);
/// True when output_size() would succeed.
bool size_compatible(const ConvNetConfig& cfg, std::size_t input);
/// Total cells lost per axis (input - output); 0 with zero padding.
std::size_t margin(const ConvNetConfig& cfg);
/// 2^depth: shifts by multiples of this commute with the network.
std::size_t stride_product(const ConvNetConfig& cfg);
/// Smallest compatible input size >= n.
std::size_t next_compatible_size(const ConvNetConfig& cfg, std::size_t n);
/// Closed-form parameter count (trainable parameters only).
std::size_t parameter_count(const ConvNetConfig& cfg);

struct StateEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

template <typename Real>
class UNet {
 public:
  UNet(const ConvNetConfig& cfg, std::uint64_t seed);
  UNet(UNet&&) noexcept = default;
  UNet& operator=(UNet&&) noexcept = default;

  const ConvNetConfig& config() const { return cfg_; }

  Tensor<Real> forward(const Tensor<Real>& x, bool training, bool record = false);
  /// Accumulates into every parameter's grad and returns d(loss)/d(input).
  Tensor<Real> backward(const Tensor<Real>& dy);
  void zero_grad();

  std::vector<Param<Real>*> params();
  std::vector<Param<Real>*> buffers();
  std::size_t parameter_count();

  /// Trainable parameters followed by buffers, in declaration order.
  std::vector<StateEntry> state();
  void load_state(const std::vector<StateEntry>& entries);

  template <typename Other>
  UNet<Other> convert() {
    UNet<Other> out(cfg_, 0);
    out.load_state(state());
    return out;
  }

 private:
  struct Block {
    std::vector<std::unique_ptr<Layer<Real>>> layers;
    Tensor<Real> run(const Tensor<Real>& x, bool training, bool record);
    Tensor<Real> back(Tensor<Real> dy);
  };
  Block make_block(const std::string& name, std::size_t in, std::size_t out, Rng& rng) const;

  ConvNetConfig cfg_;
  std::vector<Block> encoders_;
  std::vector<MaxPool2x2<Real>> pools_;
  Block bottleneck_;
  std::vector<UpConv2x2<Real>> ups_;
  std::vector<Block> decoders_;
  std::unique_ptr<Conv2d<Real>> head_;

  struct LevelTrace {
    std::size_t skip_h = 0, skip_w = 0, up_c = 0, skip_c = 0, y0 = 0, x0 = 0, h = 0, w = 0;
  };
  std::vector<LevelTrace> trace_;
  bool recorded_ = false;
};

/// Runs forward on input and on input shifted by (sy, sx) cells (a crop that
/// drops the first rows/cols) and compares the overlap bit for bit. Eval mode.
template <typename Real>
bool shift_equivariance_check(UNet<Real>& model, const Tensor<Real>& input, std::size_t sy, std::size_t sx);

/// Whether tiled inference reproduces the unchunked result exactly.
bool tiling_exact(const ConvNetConfig& cfg);

/// Eval-mode forward computed over overlapping tiles whose outputs are at
/// most `tile_output` cells per side. Falls back to one pass when tiling
/// cannot be exact for this architecture.
template <typename Real>
Tensor<Real> infer_tiled(UNet<Real>& model, const Tensor<Real>& input, std::size_t tile_output);

}  // namespace plumecast::neural

#endif
