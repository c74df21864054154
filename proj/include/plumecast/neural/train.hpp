#ifndef PLUMECAST_NEURAL_TRAIN_HPP
#define PLUMECAST_NEURAL_TRAIN_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "plumecast/neural/unet.hpp"

namespace plumecast::neural {

enum class Loss { mae, mse, huber };
enum class Optimizer { adam, sgd };

std::string_view loss_name(Loss l);
Loss loss_from_name(std::string_view s);
std::string_view optimizer_name(Optimizer o);
/// Rejects "lbfgs" with a dedicated message.
Optimizer optimizer_from_name(std::string_view s);

struct TrainConfig {
  Loss loss = Loss::mse;
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 1e-4;
  std::size_t batch_size = 20;
  std::size_t max_epochs = 20;
  std::size_t early_stopping_patience = 5;
  std::uint64_t seed = 0;
  /// 0 means every batch of the shuffled epoch.
  std::size_t max_batches_per_epoch = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

/// Mean loss over all elements and, when `grad` is given, its gradient.
template <typename Real>
double loss_value(Loss loss, const Tensor<Real>& pred, const Tensor<Real>& target, Tensor<Real>* grad = nullptr);

template <typename Real>
class OptimizerState {
 public:
  OptimizerState(Optimizer kind, double learning_rate) : kind_(kind), lr_(learning_rate) {}
  void step(const std::vector<Param<Real>*>& params);
  std::size_t steps() const { return t_; }

 private:
  Optimizer kind_;
  double lr_;
  std::size_t t_ = 0;
  std::vector<std::vector<Real>> m_, v_;
};

/// One optimizer update on a batch; returns the batch loss. Throws
/// DivergenceError when the loss is not finite.
template <typename Real>
double train_step(UNet<Real>& model, OptimizerState<Real>& opt, const Tensor<Real>& inputs, const Tensor<Real>& labels,
                  Loss loss);

/// Rows [first, first + idx.size()) picked by index from a sample tensor.
template <typename Real>
Tensor<Real> gather(const Tensor<Real>& t, const std::vector<std::size_t>& idx);

/// Eval-mode Huber loss over a sample set, batched.
template <typename Real>
double validation_huber(UNet<Real>& model, const Tensor<Real>& inputs, const Tensor<Real>& labels,
                        std::size_t batch_size);

struct FitResult {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_val_huber = 0.0;
  std::vector<double> train_loss;
  std::vector<double> val_huber;
  std::vector<StateEntry> best_state;
  nlohmann::json to_json() const;
};

using EpochLog = std::function<void(std::size_t epoch, double train_loss, double val_huber)>;

/// Epoch loop with seeded shuffling, best-by-validation-Huber selection and
/// early stopping. The model is left holding the best state.
FitResult fit(UNet<float>& model, const Tensor<float>& train_inputs, const Tensor<float>& train_labels,
              const Tensor<float>& val_inputs, const Tensor<float>& val_labels, const TrainConfig& cfg,
              const EpochLog& log = {});

}  // namespace plumecast::neural

#endif
