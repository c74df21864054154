#include "plumecast/neural/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "plumecast/error.hpp"
#include "plumecast/metrics.hpp"
#include "plumecast/rng.hpp"

namespace plumecast::neural {

std::string_view loss_name(Loss l) {
  switch (l) {
    case Loss::mae: return "mae";
    case Loss::mse: return "mse";
    case Loss::huber: return "huber";
  }
  return "mse";
}

Loss loss_from_name(std::string_view s) {
  if (s == "mae") return Loss::mae;
  if (s == "mse") return Loss::mse;
  if (s == "huber") return Loss::huber;
  throw ConfigError("loss", "unknown loss '" + std::string(s) + "' (expected mae, mse or huber)");
}

std::string_view optimizer_name(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd"; }

Optimizer optimizer_from_name(std::string_view s) {
  if (s == "adam") return Optimizer::adam;
  if (s == "sgd") return Optimizer::sgd;
  if (s == "lbfgs" || s == "LBFGS") {
    throw ConfigError("optimizer", "the LBFGS optimizer switch is reserved and not supported; use adam or sgd");
  }
  throw ConfigError("optimizer", "unknown optimizer '" + std::string(s) + "' (expected adam or sgd)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate", "learning_rate must be finite and > 0");
  }
  if (batch_size < 1) throw ConfigError("batch_size", "batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs", "max_epochs must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"loss", loss_name(loss)},
          {"optimizer", optimizer_name(optimizer)},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"early_stopping_patience", early_stopping_patience},
          {"seed", seed},
          {"max_batches_per_epoch", max_batches_per_epoch}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train", "train config must be an object");
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    auto count = [&, &key = key, &v = v]() -> std::size_t {
      if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(key, key + " must be a non-negative integer");
      return v.get<std::size_t>();
    };
    if (key == "loss") {
      if (!v.is_string()) throw ConfigError(key, "loss must be a string");
      c.loss = loss_from_name(v.get<std::string>());
    } else if (key == "optimizer") {
      if (!v.is_string()) throw ConfigError(key, "optimizer must be a string");
      c.optimizer = optimizer_from_name(v.get<std::string>());
    } else if (key == "learning_rate") {
      if (!v.is_number()) throw ConfigError(key, "learning_rate must be a number");
      c.learning_rate = v.get<double>();
    } else if (key == "batch_size") {
      c.batch_size = count();
    } else if (key == "max_epochs") {
      c.max_epochs = count();
    } else if (key == "early_stopping_patience") {
      c.early_stopping_patience = count();
    } else if (key == "seed") {
      c.seed = count();
    } else if (key == "max_batches_per_epoch") {
      c.max_batches_per_epoch = count();
    } else {
      throw ConfigError(key, "unknown train field '" + key + "'");
    }
  }
  c.validate();
  return c;
}

template <typename Real>
double loss_value(Loss loss, const Tensor<Real>& pred, const Tensor<Real>& target, Tensor<Real>* grad) {
  if (!pred.same_shape(target)) {
    throw ShapeError("loss: prediction " + pred.shape_string() + " vs label " + target.shape_string());
  }
  const std::size_t n = pred.size();
  if (grad) *grad = Tensor<Real>(pred.n, pred.c, pred.h, pred.w);
  const double inv = 1.0 / static_cast<double>(n);
  const double delta = metrics::kHuberDelta;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred.data[i]) - static_cast<double>(target.data[i]);
    double g = 0.0;
    switch (loss) {
      case Loss::mae:
        total += std::abs(d);
        g = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
        break;
      case Loss::mse:
        total += d * d;
        g = 2.0 * d;
        break;
      case Loss::huber:
        if (std::abs(d) <= delta) {
          total += 0.5 * d * d;
          g = d;
        } else {
          total += delta * (std::abs(d) - 0.5 * delta);
          g = d > 0 ? delta : -delta;
        }
        break;
    }
    if (grad) grad->data[i] = static_cast<Real>(g * inv);
  }
  return total * inv;
}

template <typename Real>
void OptimizerState<Real>::step(const std::vector<Param<Real>*>& params) {
  ++t_;
  if (kind_ == Optimizer::sgd) {
    for (auto* p : params) {
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        p->value[i] = static_cast<Real>(p->value[i] - lr_ * p->grad[i]);
      }
    }
    return;
  }
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->value.size(), Real(0));
      v_.emplace_back(p->value.size(), Real(0));
    }
  }
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      const double mi = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g;
      const double vi = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g * g;
      m[i] = static_cast<Real>(mi);
      v[i] = static_cast<Real>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p->value[i] = static_cast<Real>(p->value[i] - lr_ * mhat / (std::sqrt(vhat) + kAdamEpsilon));
    }
  }
}

template <typename Real>
double train_step(UNet<Real>& model, OptimizerState<Real>& opt, const Tensor<Real>& inputs, const Tensor<Real>& labels,
                  Loss loss) {
  if (inputs.n == 0) throw ShapeError("train_step: empty batch");
  if (inputs.n != labels.n) throw ShapeError("train_step: input and label batch sizes differ");
  model.zero_grad();
  const Tensor<Real> pred = model.forward(inputs, true, true);
  Tensor<Real> grad;
  const double value = loss_value(loss, pred, labels, &grad);
  if (!std::isfinite(value)) {
    throw DivergenceError("training loss became non-finite after " + std::to_string(opt.steps()) + " steps",
                          {value});
  }
  model.backward(grad);
  opt.step(model.params());
  return value;
}

template <typename Real>
Tensor<Real> gather(const Tensor<Real>& t, const std::vector<std::size_t>& idx) {
  Tensor<Real> out(idx.size(), t.c, t.h, t.w);
  const std::size_t stride = t.c * t.plane();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(t.data.begin() + idx[i] * stride, t.data.begin() + (idx[i] + 1) * stride, out.data.begin() + i * stride);
  }
  return out;
}

template <typename Real>
double validation_huber(UNet<Real>& model, const Tensor<Real>& inputs, const Tensor<Real>& labels,
                        std::size_t batch_size) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t first = 0; first < inputs.n; first += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, inputs.n - first));
    std::iota(idx.begin(), idx.end(), first);
    const Tensor<Real> y = gather(labels, idx);
    const Tensor<Real> pred = model.forward(gather(inputs, idx), false);
    total += loss_value(Loss::huber, pred, y) * static_cast<double>(y.size());
    count += y.size();
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

nlohmann::json FitResult::to_json() const {
  return {{"epochs_run", epochs_run},
          {"best_epoch", best_epoch},
          {"best_val_huber", best_val_huber},
          {"train_loss", train_loss},
          {"val_huber", val_huber}};
}

FitResult fit(UNet<float>& model, const Tensor<float>& train_inputs, const Tensor<float>& train_labels,
              const Tensor<float>& val_inputs, const Tensor<float>& val_labels, const TrainConfig& cfg,
              const EpochLog& log) {
  cfg.validate();
  if (train_inputs.n == 0) throw ShapeError("fit: no training samples");
  OptimizerState<float> opt(cfg.optimizer, cfg.learning_rate);
  FitResult result;
  std::size_t since_best = 0;
  std::vector<double> all_losses;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order(train_inputs.n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(substream(cfg.seed, "train/epoch/" + std::to_string(epoch)));
    rng.shuffle(order.begin(), order.end());
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      if (cfg.max_batches_per_epoch && batches == cfg.max_batches_per_epoch) break;
      std::vector<std::size_t> idx(order.begin() + first,
                                   order.begin() + std::min(order.size(), first + cfg.batch_size));
      double value;
      try {
        value = train_step(model, opt, gather(train_inputs, idx), gather(train_labels, idx), cfg.loss);
      } catch (const DivergenceError& e) {
        all_losses.push_back(e.loss_trace().empty() ? NAN : e.loss_trace().back());
        throw DivergenceError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ")", all_losses);
      }
      all_losses.push_back(value);
      sum += value;
      ++batches;
    }
    const double train_loss = sum / static_cast<double>(batches);
    const double val = validation_huber(model, val_inputs, val_labels, cfg.batch_size);
    if (!std::isfinite(val)) throw DivergenceError("validation loss became non-finite", all_losses);
    result.train_loss.push_back(train_loss);
    result.val_huber.push_back(val);
    result.epochs_run = epoch + 1;
    if (epoch == 0 || val < result.best_val_huber) {
      result.best_val_huber = val;
      result.best_epoch = epoch;
      result.best_state = model.state();
      since_best = 0;
    } else {
      ++since_best;
    }
    if (log) log(epoch, train_loss, val);
    if (cfg.early_stopping_patience && since_best >= cfg.early_stopping_patience) break;
  }
  model.load_state(result.best_state);
  return result;
}

template double loss_value(Loss, const Tensor<float>&, const Tensor<float>&, Tensor<float>*);
template double loss_value(Loss, const Tensor<double>&, const Tensor<double>&, Tensor<double>*);
template class OptimizerState<float>;
template class OptimizerState<double>;
template double train_step(UNet<float>&, OptimizerState<float>&, const Tensor<float>&, const Tensor<float>&, Loss);
template double train_step(UNet<double>&, OptimizerState<double>&, const Tensor<double>&, const Tensor<double>&,
                           Loss);
template Tensor<float> gather(const Tensor<float>&, const std::vector<std::size_t>&);
template Tensor<double> gather(const Tensor<double>&, const std::vector<std::size_t>&);
template double validation_huber(UNet<float>&, const Tensor<float>&, const Tensor<float>&, std::size_t);
template double validation_huber(UNet<double>&, const Tensor<double>&, const Tensor<double>&, std::size_t);

}  // namespace plumecast::neural
