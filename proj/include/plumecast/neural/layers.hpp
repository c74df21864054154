#ifndef PLUMECAST_NEURAL_LAYERS_HPP
#define PLUMECAST_NEURAL_LAYERS_HPP

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "plumecast/neural/tensor.hpp"
#include "plumecast/rng.hpp"

namespace plumecast::neural {

enum class Activation { relu, tanh, sigmoid, leakyrelu };
enum class Norm { batch, group, none };
enum class Padding { zero, none };

std::string_view activation_name(Activation a);
Activation activation_from_name(std::string_view s);
std::string_view norm_name(Norm n);
Norm norm_from_name(std::string_view s);
std::string_view padding_name(Padding p);
Padding padding_from_name(std::string_view s);

template <typename Real>
struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty for buffers such as running statistics
};

template <typename Real>
class Layer {
 public:
  virtual ~Layer() = default;
  /// `record` keeps what backward() needs; inference passes false.
  virtual Tensor<Real> forward(const Tensor<Real>& x, bool training, bool record) = 0;
  /// Accumulates parameter gradients and returns d(loss)/d(input).
  virtual Tensor<Real> backward(const Tensor<Real>& dy) = 0;
  virtual std::vector<Param<Real>*> params() { return {}; }
  virtual std::vector<Param<Real>*> buffers() { return {}; }
};

/// Stride-1 convolution. Zero padding keeps the spatial size (even kernels
/// pad (k-1)/2 before and the rest after); Padding::none is a valid conv.
template <typename Real>
class Conv2d final : public Layer<Real> {
 public:
  Conv2d(std::string name, std::size_t in, std::size_t out, std::size_t kernel, Padding padding, Rng& rng);
  Tensor<Real> forward(const Tensor<Real>& x, bool training, bool record) override;
  Tensor<Real> backward(const Tensor<Real>& dy) override;
  std::vector<Param<Real>*> params() override { return {&weight_, &bias_}; }

  Param<Real>& weight() { return weight_; }
  Param<Real>& bias() { return bias_; }

 private:
  std::size_t in_, out_, k_, pad_lo_, pad_hi_;
  Param<Real> weight_, bias_;
  Tensor<Real> input_;  // padded input
  std::size_t in_h_ = 0, in_w_ = 0;
};

/// 2x2 transposed convolution with stride 2.
template <typename Real>
class UpConv2x2 final : public Layer<Real> {
 public:
  UpConv2x2(std::string name, std::size_t in, std::size_t out, Rng& rng);
  Tensor<Real> forward(const Tensor<Real>& x, bool training, bool record) override;
  Tensor<Real> backward(const Tensor<Real>& dy) override;
  std::vector<Param<Real>*> params() override { return {&weight_, &bias_}; }

 private:
  std::size_t in_, out_;
  Param<Real> weight_, bias_;
  Tensor<Real> input_;
};

template <typename Real>
class MaxPool2x2 final : public Layer<Real> {
 public:
  Tensor<Real> forward(const Tensor<Real>& x, bool training, bool record) override;
  Tensor<Real> backward(const Tensor<Real>& dy) override;

 private:
  std::vector<unsigned char> argmax_;
  std::size_t n_ = 0, c_ = 0, h_ = 0, w_ = 0;
};

template <typename Real>
class ActivationLayer final : public Layer<Real> {
 public:
  explicit ActivationLayer(Activation a) : kind_(a) {}
  Tensor<Real> forward(const Tensor<Real>& x, bool training, bool record) override;
  Tensor<Real> backward(const Tensor<Real>& dy) override;

 private:
  Activation kind_;
  Tensor<Real> input_, output_;
};

/// Batch normalization (training: batch statistics, eval: running ones) or
/// group normalization (per-sample statistics in both modes).
template <typename Real>
class NormLayer final : public Layer<Real> {
 public:
  NormLayer(std::string name, Norm kind, std::size_t channels);
  Tensor<Real> forward(const Tensor<Real>& x, bool training, bool record) override;
  Tensor<Real> backward(const Tensor<Real>& dy) override;
  std::vector<Param<Real>*> params() override { return {&gamma_, &beta_}; }
  std::vector<Param<Real>*> buffers() override;

  static std::size_t group_count(std::size_t channels);

 private:
  Norm kind_;
  std::size_t channels_, groups_;
  Param<Real> gamma_, beta_, running_mean_, running_var_;
  Tensor<Real> xhat_;
  std::vector<Real> inv_std_;  // per statistic group
  bool used_batch_stats_ = false;
};

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kLeakySlope = 0.01;

}  // namespace plumecast::neural

#endif
