#include "plumecast/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "plumecast/error.hpp"
#include "plumecast/rng.hpp"

namespace plumecast::synth {

void PerlinConfig::validate() const {
  if (octaves < 1) throw ConfigError("perlin.octaves", "must be >= 1");
  if (!(base_frequency > 0.0)) throw ConfigError("perlin.base_frequency", "must be positive");
  if (!(persistence > 0.0 && persistence <= 1.0)) throw ConfigError("perlin.persistence", "must lie in (0, 1]");
  if (!(k_min > 0.0)) throw ConfigError("perlin.k_min", "must be positive");
  if (!(k_min < k_max)) throw ConfigError("perlin.k_max", "must exceed k_min");
}

namespace {

class GradientNoise {
 public:
  explicit GradientNoise(std::uint64_t seed) {
    std::array<int, 256> p{};
    std::iota(p.begin(), p.end(), 0);
    Rng rng(seed);
    rng.shuffle(p.begin(), p.end());
    for (int i = 0; i < 512; ++i) perm_[i] = p[i & 255];
  }

  double operator()(double x, double y) const {
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const int xi = static_cast<int>(static_cast<long long>(fx) & 255);
    const int yi = static_cast<int>(static_cast<long long>(fy) & 255);
    const double dx = x - fx;
    const double dy = y - fy;
    const double u = fade(dx);
    const double v = fade(dy);
    const int aa = perm_[perm_[xi] + yi];
    const int ab = perm_[perm_[xi] + yi + 1];
    const int ba = perm_[perm_[xi + 1] + yi];
    const int bb = perm_[perm_[xi + 1] + yi + 1];
    const double top = lerp(u, grad(aa, dx, dy), grad(ba, dx - 1.0, dy));
    const double bottom = lerp(u, grad(ab, dx, dy - 1.0), grad(bb, dx - 1.0, dy - 1.0));
    return lerp(v, top, bottom);
  }

 private:
  static double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }
  static double lerp(double t, double a, double b) { return a + t * (b - a); }
  static double grad(int hash, double x, double y) {
    switch (hash & 7) {
      case 0: return x + y;
      case 1: return -x + y;
      case 2: return x - y;
      case 3: return -x - y;
      case 4: return x;
      case 5: return -x;
      case 6: return y;
      default: return -y;
    }
  }

  std::array<int, 512> perm_{};
};

}  // namespace

std::vector<double> perlin_noise(const PerlinConfig& cfg, const GridSpec& spec) {
  cfg.validate();
  spec.validate();
  std::vector<GradientNoise> layers;
  for (int o = 0; o < cfg.octaves; ++o) layers.emplace_back(substream(cfg.seed, "perlin/octave/" + std::to_string(o)));

  const double scale = 1.0 / static_cast<double>(spec.width);
  std::vector<double> out(spec.cells(), 0.0);
  for (std::size_t r = 0; r < spec.height; ++r) {
    for (std::size_t c = 0; c < spec.width; ++c) {
      const double x = (static_cast<double>(c) + 0.5) * scale;
      const double y = (static_cast<double>(r) + 0.5) * scale;
      double freq = cfg.base_frequency;
      double amp = 1.0;
      double acc = 0.0;
      for (const auto& layer : layers) {
        acc += amp * layer(x * freq, y * freq);
        freq *= 2.0;
        amp *= cfg.persistence;
      }
      out[spec.index(r, c)] = acc;
    }
  }
  return out;
}

ScalarField2D generate_permeability(const PerlinConfig& cfg, const GridSpec& spec) {
  auto noise = perlin_noise(cfg, spec);
  const auto [lo_it, hi_it] = std::minmax_element(noise.begin(), noise.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;

  const double a = cfg.log_space ? std::log(cfg.k_min) : cfg.k_min;
  const double b = cfg.log_space ? std::log(cfg.k_max) : cfg.k_max;
  for (double& v : noise) {
    const double t = range < 1e-12 ? 0.5 : (v - lo) / range;
    const double mapped = a + t * (b - a);
    v = std::clamp(cfg.log_space ? std::exp(mapped) : mapped, cfg.k_min, cfg.k_max);
  }
  return {spec, Unit::permeability_m2, std::move(noise)};
}

PumpSet place_pumps(std::uint64_t seed, std::size_t count, const GridSpec& spec, std::size_t min_spacing,
                    std::size_t border) {
  spec.validate();
  PumpSet set;
  if (count == 0) return set;
  if (2 * border >= spec.width || 2 * border >= spec.height) {
    throw DomainError("pump border " + std::to_string(border) + " leaves no admissible cells");
  }
  const std::uint64_t rows = spec.height - 2 * border;
  const std::uint64_t cols = spec.width - 2 * border;
  const auto spacing = static_cast<std::int64_t>(min_spacing);

  Rng rng(substream(seed, "pumps"));
  const std::size_t budget = 1000 * count + 1000;
  for (std::size_t attempt = 0; attempt < budget && set.positions.size() < count; ++attempt) {
    const Cell c{static_cast<std::int64_t>(border + rng.below(rows)), static_cast<std::int64_t>(border + rng.below(cols))};
    const bool ok = std::none_of(set.positions.begin(), set.positions.end(), [&](Cell o) {
      return std::max(std::abs(o.row - c.row), std::abs(o.col - c.col)) < std::max<std::int64_t>(spacing, 1);
    });
    if (ok) set.positions.push_back(c);
  }
  if (set.positions.size() < count) {
    throw DomainError("placed only " + std::to_string(set.positions.size()) + " of " + std::to_string(count) +
                      " pumps before the rejection budget ran out");
  }
  return set;
}

}  // namespace plumecast::synth
