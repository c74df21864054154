#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <set>

#include "plumecast/error.hpp"
#include "plumecast/synth.hpp"

using namespace plumecast;
using namespace plumecast::synth;

namespace {

std::size_t local_extrema(const std::vector<double>& v, std::size_t w, std::size_t h) {
  std::size_t count = 0;
  for (std::size_t r = 1; r + 1 < h; ++r) {
    for (std::size_t c = 1; c + 1 < w; ++c) {
      const double x = v[r * w + c];
      bool is_max = true, is_min = true;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const double y = v[(r + dr) * w + c + dc];
          is_max = is_max && x > y;
          is_min = is_min && x < y;
        }
      }
      if (is_max || is_min) ++count;
    }
  }
  return count;
}

}  // namespace

TEST_CASE("permeability is deterministic in the seed") {
  GridSpec spec{96, 64, 5.0};
  PerlinConfig cfg;
  cfg.seed = 42;
  auto a = generate_permeability(cfg, spec);
  auto b = generate_permeability(cfg, spec);
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  cfg.seed = 43;
  auto c = generate_permeability(cfg, spec);
  CHECK_FALSE(std::equal(a.values().begin(), a.values().end(), c.values().begin()));
}

TEST_CASE("permeability stays in the configured interval") {
  GridSpec spec{128, 128, 5.0};
  for (bool log_space : {false, true}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      PerlinConfig cfg;
      cfg.seed = seed;
      cfg.log_space = log_space;
      auto k = generate_permeability(cfg, spec);
      CHECK(k.min() >= 1.02e-11);
      CHECK(k.max() <= 5.10e-9);
      CHECK(k.min() > 0.0);
      CHECK(k.unit() == Unit::permeability_m2);
      // the affine rescale touches both ends of the interval
      CHECK(k.min() == doctest::Approx(1.02e-11).epsilon(1e-9));
      CHECK(k.max() == doctest::Approx(5.10e-9).epsilon(1e-9));
    }
  }
}

TEST_CASE("flat noise maps to mid-range") {
  GridSpec spec{32, 32, 1.0};
  PerlinConfig cfg;
  cfg.octaves = 1;
  cfg.base_frequency = 1e-14;
  auto k = generate_permeability(cfg, spec);
  const double mid = 0.5 * (cfg.k_min + cfg.k_max);
  CHECK(k.min() == doctest::Approx(mid));
  CHECK(k.max() == k.min());
}

TEST_CASE("more octaves never remove local extrema") {
  GridSpec spec{128, 128, 1.0};
  for (std::uint64_t seed : {5u, 6u, 7u, 8u}) {
    std::size_t prev = 0;
    for (int oct = 1; oct <= 5; ++oct) {
      PerlinConfig cfg;
      cfg.seed = seed;
      cfg.octaves = oct;
      const auto n = local_extrema(perlin_noise(cfg, spec), spec.width, spec.height);
      CHECK(n >= prev);
      prev = n;
    }
  }
}

TEST_CASE("Perlin config validation") {
  PerlinConfig cfg;
  cfg.octaves = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.k_max = cfg.k_min;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.persistence = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("pump placement") {
  SUBCASE("zero pumps") {
    CHECK(place_pumps(1, 0, GridSpec{10, 10, 1.0}).positions.empty());
  }
  SUBCASE("hundred unique pumps on 2560 squared") {
    GridSpec spec{2560, 2560, 5.0};
    auto p = place_pumps(3, 100, spec);
    std::set<Cell> unique(p.positions.begin(), p.positions.end());
    CHECK(unique.size() == 100);
    for (auto c : p.positions) CHECK(in_bounds(spec, c));
  }
  SUBCASE("pairwise spacing by brute force") {
    GridSpec spec{64, 64, 1.0};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto p = place_pumps(seed, 30, spec, 4);
      REQUIRE(p.positions.size() == 30);
      for (std::size_t i = 0; i < p.positions.size(); ++i) {
        for (std::size_t j = i + 1; j < p.positions.size(); ++j) {
          const auto a = p.positions[i], b = p.positions[j];
          CHECK(std::max(std::llabs(a.row - b.row), std::llabs(a.col - b.col)) >= 4);
        }
      }
    }
  }
  SUBCASE("border keeps pumps away from the edge") {
    GridSpec spec{100, 80, 1.0};
    auto p = place_pumps(9, 6, spec, 10, 20);
    for (auto c : p.positions) {
      CHECK(c.row >= 20);
      CHECK(c.row < 60);
      CHECK(c.col >= 20);
      CHECK(c.col < 80);
    }
  }
  SUBCASE("deterministic") {
    GridSpec spec{200, 200, 1.0};
    CHECK(place_pumps(4, 10, spec).positions == place_pumps(4, 10, spec).positions);
  }
  SUBCASE("budget exhaustion names the achieved count") {
    GridSpec spec{10, 10, 1.0};
    try {
      place_pumps(1, 50, spec, 5);
      FAIL("expected failure");
    } catch (const DomainError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("placed only") != std::string::npos);
      CHECK(msg.find("of 50") != std::string::npos);
    }
  }
}
