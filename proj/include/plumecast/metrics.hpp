#ifndef PLUMECAST_METRICS_HPP
#define PLUMECAST_METRICS_HPP

#include <map>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "plumecast/dataio.hpp"
#include "plumecast/grid.hpp"

namespace plumecast::metrics {

inline constexpr double kPatThreshold = 0.1;  // degC, measurement precision
inline constexpr double kHuberDelta = 1.0;    // on the normalized scale

struct PointwiseMetrics {
  double mae = 0.0;
  double mse = 0.0;
  double l_inf = 0.0;
  double huber = 0.0;
};

/// Inputs are normalized; MAE/MSE/L_inf are taken after de-normalization,
/// Huber on the normalized values.
PointwiseMetrics pointwise_metrics(std::span<const double> pred, std::span<const double> label,
                                   const dataio::ChannelRange& range, double huber_delta = kHuberDelta);

/// Percentage of cells whose de-normalized absolute error exceeds `threshold`.
/// Only defined for the temperature channel "T".
double pat(std::span<const double> pred, std::span<const double> label, const dataio::ChannelRange& range,
           const std::string& channel = "T", double threshold = kPatThreshold);

/// Mean SSIM over all valid 11x11 Gaussian (sigma 1.5) windows, data range 1.
double ssim(std::span<const double> pred, std::span<const double> label, std::size_t width, std::size_t height);
double ssim(const ScalarField2D& pred, const ScalarField2D& label);

struct ChannelMetrics {
  double mae = 0.0;
  double mse = 0.0;
  double l_inf = 0.0;
  double ssim = 0.0;
  double huber = 0.0;
  std::optional<double> pat_percent;
  std::string unit;
};

struct MetricsReport {
  std::map<std::string, ChannelMetrics> channels;
  std::size_t width = 0;
  std::size_t height = 0;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

/// All metrics for one channel from normalized prediction and label.
ChannelMetrics evaluate_channel(const ScalarField2D& pred, const ScalarField2D& label,
                                const dataio::ChannelRange& range, const std::string& channel);

}  // namespace plumecast::metrics

#endif
