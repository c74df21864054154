#include <doctest.h>

#include <cmath>

#include "oracles/oracles.hpp"
#include "plumecast/error.hpp"
#include "plumecast/metrics.hpp"
#include "plumecast/rng.hpp"

using namespace plumecast;
using namespace plumecast::metrics;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform();
  return v;
}

}  // namespace

TEST_CASE("identical fields have zero error") {
  auto v = random_values(64, 1);
  dataio::ChannelRange r{10.0, 15.0};
  auto m = pointwise_metrics(v, v, r);
  CHECK(m.mae == 0.0);
  CHECK(m.mse == 0.0);
  CHECK(m.l_inf == 0.0);
  CHECK(m.huber == 0.0);
  CHECK(pat(v, v, r) == 0.0);
}

TEST_CASE("constant offset of half a degree") {
  dataio::ChannelRange r{0.0, 10.0};
  auto label = random_values(100, 2);
  for (auto& x : label) x *= 0.9;
  std::vector<double> pred(label);
  for (auto& x : pred) x += 0.05;
  auto m = pointwise_metrics(pred, label, r);
  CHECK(m.mae == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(m.mse == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(m.l_inf == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("pointwise metrics match the naive loop") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto a = random_values(64, seed * 2 + 1);
    auto b = random_values(64, seed * 2 + 2);
    const double lo = -3.0 + double(seed), hi = 40.0 * double(seed + 1);
    auto m = pointwise_metrics(a, b, {lo, hi});
    auto ref = oracles::pointwise_reference(a, b, lo, hi);
    CHECK(std::abs(m.mae - ref.mae) <= 1e-12 * std::max(1.0, ref.mae));
    CHECK(std::abs(m.mse - ref.mse) <= 1e-12 * std::max(1.0, ref.mse));
    CHECK(std::abs(m.l_inf - ref.linf) <= 1e-12 * std::max(1.0, ref.linf));
    CHECK(m.mae <= m.l_inf);
    CHECK(m.mse <= m.l_inf * m.l_inf * (1 + 1e-12));
    auto swapped = pointwise_metrics(b, a, {lo, hi});
    CHECK(swapped.mae == doctest::Approx(m.mae));
    CHECK(swapped.huber == doctest::Approx(m.huber));
    // affine consistency: normalized MAE and L_inf scale by the range, MSE by its square
    auto unit = pointwise_metrics(a, b, {0.0, 1.0});
    CHECK(m.mae == doctest::Approx(unit.mae * (hi - lo)).epsilon(1e-12));
    CHECK(m.l_inf == doctest::Approx(unit.l_inf * (hi - lo)).epsilon(1e-12));
    CHECK(m.mse == doctest::Approx(unit.mse * (hi - lo) * (hi - lo)).epsilon(1e-12));
  }
}

TEST_CASE("Huber on the normalized scale") {
  std::vector<double> a{0.0, 0.0, 0.0, 0.0}, b{0.5, 2.0, -3.0, 0.0};
  auto m = pointwise_metrics(a, b, {0.0, 100.0});
  CHECK(m.huber == doctest::Approx((0.125 + 1.5 + 2.5 + 0.0) / 4));
  CHECK(kHuberDelta == 1.0);
  auto u = pointwise_metrics(a, b, {0.0, 1.0});
  CHECK(u.huber <= u.mse / 2 + kHuberDelta * u.mae);
}

TEST_CASE("PAT") {
  CHECK(kPatThreshold == 0.1);
  dataio::ChannelRange r{0.0, 1.0};
  std::vector<double> label{10.0, 10.0, 10.0, 10.0}, pred{10.2, 9.8, 10.2, 10.0};
  CHECK(pat(pred, label, r) == 75.0);
  CHECK(pat(pred, label, r, "T", 0.3) == 0.0);
  CHECK_THROWS_AS(pat(pred, label, r, "vx"), DomainError);

  auto a = random_values(400, 8), b = random_values(400, 9);
  double prev = 100.0;
  for (double t = 0.0; t < 2.0; t += 0.05) {
    const double p = pat(a, b, {0.0, 2.0}, "T", t);
    CHECK(p <= prev);
    CHECK(p >= 0.0);
    prev = p;
  }
}

TEST_CASE("SSIM") {
  const std::size_t w = 24, h = 19;
  auto x = random_values(w * h, 3);
  CHECK(ssim(x, x, w, h) == 1.0);

  SUBCASE("constant fields follow the zero-variance closed form") {
    for (auto [a, b] : {std::pair{0.2, 0.7}, std::pair{0.5, 0.5}, std::pair{0.0, 1.0}}) {
      std::vector<double> fa(w * h, a), fb(w * h, b);
      const double c1 = 1e-4, c2 = 9e-4;
      const double expected = (2 * a * b + c1) * c2 / ((a * a + b * b + c1) * c2);
      CHECK(ssim(fa, fb, w, h) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
  SUBCASE("random pairs match the direct window reference") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto a = random_values(w * h, 10 + seed);
      auto b = random_values(w * h, 20 + seed);
      for (std::size_t i = 0; i < a.size(); ++i) b[i] = 0.5 * a[i] + 0.5 * b[i];
      const double got = ssim(a, b, w, h);
      CHECK(std::abs(got - oracles::ssim_reference(a, b, w, h)) < 1e-9);
      CHECK(std::abs(got - ssim(b, a, w, h)) < 1e-15);
      CHECK(std::abs(got) <= 1.0);
    }
  }
  SUBCASE("too small") {
    std::vector<double> s(10 * 10, 0.0);
    CHECK_THROWS_AS(ssim(s, s, 10, 10), ShapeError);
    CHECK_THROWS_AS(ssim(x, s, w, h), ShapeError);
  }
}

TEST_CASE("channel reports") {
  GridSpec spec{16, 16, 1.0};
  auto a = random_values(256, 4), b = random_values(256, 5);
  ScalarField2D pa(spec, Unit::unitless, a), pb(spec, Unit::unitless, b);
  auto t = evaluate_channel(pa, pb, {10.0, 15.0}, "T");
  CHECK(t.pat_percent.has_value());
  CHECK(t.unit == "degC");
  auto v = evaluate_channel(pa, pb, {-100.0, 100.0}, "vx");
  CHECK_FALSE(v.pat_percent.has_value());
  CHECK(v.unit == "m/y");
  MetricsReport rep;
  rep.channels["T"] = t;
  rep.channels["vx"] = v;
  rep.width = 16;
  rep.height = 16;
  auto back = MetricsReport::from_json(rep.to_json());
  CHECK(back.channels.at("T").mae == t.mae);
  CHECK(*back.channels.at("T").pat_percent == *t.pat_percent);
  CHECK(back.to_json() == rep.to_json());
  CHECK_THROWS_AS(evaluate_channel(pa, ScalarField2D(GridSpec{16, 15, 1.0}, Unit::unitless, 0.0), {0, 1}, "T"),
                  ShapeError);
}
