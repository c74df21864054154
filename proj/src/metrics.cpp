#include "plumecast/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "plumecast/error.hpp"

namespace plumecast::metrics {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_same(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("prediction has " + std::to_string(a) + " cells, label " + std::to_string(b));
  if (a == 0) throw ShapeError("empty fields");
}

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> g{};
  double sum = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(kWindow / 2);
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable valid-mode filtering: rows first, then columns.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t w, std::size_t h,
                                 const std::array<double, kWindow>& g) {
  const std::size_t ow = w - kWindow + 1;
  const std::size_t oh = h - kWindow + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * img[y * w + x + k];
      tmp[y * ow + x] = acc;
    }
  }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kWindow; ++k) acc += g[k] * tmp[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

PointwiseMetrics pointwise_metrics(std::span<const double> pred, std::span<const double> label,
                                   const dataio::ChannelRange& range, double huber_delta) {
  check_same(pred.size(), label.size());
  PointwiseMetrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double err = std::abs(range.denormalize(pred[i]) - range.denormalize(label[i]));
    m.mae += err;
    m.mse += err * err;
    m.l_inf = std::max(m.l_inf, err);
    const double e = std::abs(pred[i] - label[i]);
    m.huber += e <= huber_delta ? 0.5 * e * e : huber_delta * (e - 0.5 * huber_delta);
  }
  const auto n = static_cast<double>(pred.size());
  m.mae /= n;
  m.mse /= n;
  m.huber /= n;
  return m;
}

double pat(std::span<const double> pred, std::span<const double> label, const dataio::ChannelRange& range,
           const std::string& channel, double threshold) {
  if (channel != "T") throw DomainError("PAT is only defined for temperature, not '" + channel + "'");
  check_same(pred.size(), label.size());
  std::size_t above = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (std::abs(range.denormalize(pred[i]) - range.denormalize(label[i])) > threshold) ++above;
  }
  return 100.0 * static_cast<double>(above) / static_cast<double>(pred.size());
}

double ssim(std::span<const double> pred, std::span<const double> label, std::size_t width, std::size_t height) {
  check_same(pred.size(), label.size());
  if (pred.size() != width * height) throw ShapeError("SSIM field size does not match its dimensions");
  if (width < kWindow || height < kWindow) {
    throw ShapeError("SSIM needs at least 11x11 cells, got " + std::to_string(width) + "x" + std::to_string(height));
  }
  const auto g = gaussian_taps();
  std::vector<double> x(pred.begin(), pred.end()), y(label.begin(), label.end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, width, height, g);
  const auto my = filter_valid(y, width, height, g);
  const auto sxx = filter_valid(xx, width, height, g);
  const auto syy = filter_valid(yy, width, height, g);
  const auto sxy = filter_valid(xy, width, height, g);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + kC1) * (2.0 * cov + kC2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
  }
  return total / static_cast<double>(mx.size());
}

double ssim(const ScalarField2D& pred, const ScalarField2D& label) {
  if (!(pred.spec() == label.spec())) throw ShapeError("SSIM fields have different grids");
  return ssim(pred.values(), label.values(), pred.spec().width, pred.spec().height);
}

ChannelMetrics evaluate_channel(const ScalarField2D& pred, const ScalarField2D& label,
                                const dataio::ChannelRange& range, const std::string& channel) {
  if (!(pred.spec() == label.spec())) throw ShapeError("prediction and label grids differ");
  const auto pw = pointwise_metrics(pred.values(), label.values(), range);
  ChannelMetrics m;
  m.mae = pw.mae;
  m.mse = pw.mse;
  m.l_inf = pw.l_inf;
  m.huber = pw.huber;
  m.ssim = ssim(pred, label);
  if (channel == "T") {
    m.pat_percent = pat(pred.values(), label.values(), range, channel);
    m.unit = "degC";
  } else if (channel == "vx" || channel == "vy") {
    m.unit = "m/y";
  } else {
    m.unit = "physical";
  }
  return m;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["region"] = {{"width", width}, {"height", height}};
  auto& ch = j["channels"];
  ch = nlohmann::json::object();
  for (const auto& [name, m] : channels) {
    nlohmann::json c = {{"mae", m.mae},
                        {"mse", m.mse},
                        {"l_inf", m.l_inf},
                        {"ssim", m.ssim},
                        {"huber", m.huber},
                        {"pat_percent", m.pat_percent ? nlohmann::json(*m.pat_percent) : nlohmann::json(nullptr)},
                        {"units",
                         {{"mae", m.unit},
                          {"mse", m.unit + "^2"},
                          {"l_inf", m.unit},
                          {"ssim", "unitless"},
                          {"huber", "normalized"},
                          {"pat_percent", "%"}}}};
    ch[name] = std::move(c);
  }
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.width = j.at("region").at("width").get<std::size_t>();
  r.height = j.at("region").at("height").get<std::size_t>();
  for (const auto& [name, c] : j.at("channels").items()) {
    ChannelMetrics m;
    m.mae = c.at("mae").get<double>();
    m.mse = c.at("mse").get<double>();
    m.l_inf = c.at("l_inf").get<double>();
    m.ssim = c.at("ssim").get<double>();
    m.huber = c.at("huber").get<double>();
    if (!c.at("pat_percent").is_null()) m.pat_percent = c.at("pat_percent").get<double>();
    m.unit = c.at("units").at("mae").get<std::string>();
    r.channels[name] = m;
  }
  return r;
}

}  // namespace plumecast::metrics
