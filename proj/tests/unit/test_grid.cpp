#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "plumecast/error.hpp"
#include "plumecast/field_io.hpp"
#include "plumecast/grid.hpp"
#include "plumecast/rng.hpp"
#include "plumecast/synth.hpp"

using namespace plumecast;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "plumecast_test_grid";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("rasterize_pumps marks pump cells only") {
  GridSpec spec{3, 3, 1.0};
  SUBCASE("empty set") {
    auto f = rasterize_pumps(PumpSet{}, spec);
    CHECK(f.sum() == 0.0);
  }
  SUBCASE("two pumps on a 3x3 grid") {
    PumpSet p;
    p.positions = {{0, 0}, {1, 1}};
    auto f = rasterize_pumps(p, spec);
    CHECK(f.sum() == 2.0);
    CHECK(f.at(0, 0) == 1.0);
    CHECK(f.at(1, 1) == 1.0);
    CHECK(f.at(2, 2) == 0.0);
    auto again = rasterize_pumps(p, spec);
    CHECK(std::equal(f.values().begin(), f.values().end(), again.values().begin()));
    CHECK(pump_cells(f) == p.positions);
  }
  SUBCASE("out of bounds names the index") {
    PumpSet p;
    p.positions = {{0, 0}, {3, 1}};
    try {
      rasterize_pumps(p, spec);
      FAIL("expected rejection");
    } catch (const DomainError& e) {
      CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
    p.positions = {{-1, 0}};
    CHECK_THROWS_AS(rasterize_pumps(p, spec), DomainError);
  }
}

TEST_CASE("hundred pumps on the full-scale grid") {
  GridSpec spec{2560, 2560, 5.0};
  auto pumps = synth::place_pumps(7, 100, spec);
  auto f = rasterize_pumps(pumps, spec);
  CHECK(f.sum() == 100.0);
}

TEST_CASE("bilinear sampling") {
  GridSpec spec{4, 3, 2.0};
  Rng rng(3);
  std::vector<double> vx(spec.cells()), vy(spec.cells());
  for (auto& v : vx) v = rng.uniform(-5, 5);
  for (auto& v : vy) v = rng.uniform(-5, 5);
  VectorField2D field(spec, vx, vy);

  SUBCASE("exact at cell centres") {
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        auto s = field.sample({double(c), double(r)});
        REQUIRE(s);
        CHECK(s->x == vx[spec.index(r, c)]);
        CHECK(s->y == vy[spec.index(r, c)]);
      }
    }
  }
  SUBCASE("constant field") {
    VectorField2D c(spec, std::vector<double>(12, 1.25), std::vector<double>(12, -3.0));
    for (int i = 0; i < 50; ++i) {
      auto s = c.sample({rng.uniform(0, 3), rng.uniform(0, 2)});
      REQUIRE(s);
      CHECK(s->x == doctest::Approx(1.25).epsilon(1e-15));
      CHECK(s->y == doctest::Approx(-3.0).epsilon(1e-15));
    }
  }
  SUBCASE("midpoint of 0 and 2") {
    VectorField2D two(GridSpec{2, 1, 1.0}, {0.0, 2.0}, {0.0, 0.0});
    auto s = two.sample({0.5, 0.0});
    REQUIRE(s);
    CHECK(s->x == 1.0);
  }
  SUBCASE("outside signals exit") {
    CHECK_FALSE(field.sample({-0.01, 1.0}));
    CHECK_FALSE(field.sample({1.0, 2.01}));
    CHECK(field.sample({3.0, 2.0}));
  }
  SUBCASE("continuity bound") {
    double max_diff = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 4; ++c) {
        if (c + 1 < 4) max_diff = std::max(max_diff, std::abs(vx[spec.index(r, c)] - vx[spec.index(r, c + 1)]));
        if (r + 1 < 3) max_diff = std::max(max_diff, std::abs(vx[spec.index(r, c)] - vx[spec.index(r + 1, c)]));
      }
    }
    const double eps = 1e-3;
    for (int i = 0; i < 200; ++i) {
      Point p{rng.uniform(0, 3 - eps), rng.uniform(0, 2 - eps)};
      const double ang = rng.uniform(0, 6.283185307179586);
      Point q{p.x + eps * std::cos(ang) * 0.5, p.y + eps * std::sin(ang) * 0.5};
      q.x = std::clamp(q.x, 0.0, 3.0);
      q.y = std::clamp(q.y, 0.0, 2.0);
      const double d = std::hypot(q.x - p.x, q.y - p.y);
      CHECK(std::abs(field.sample(p)->x - field.sample(q)->x) <= d * max_diff * 2 + 1e-12);
    }
  }
}

TEST_CASE("constructors reject non-finite values") {
  GridSpec spec{2, 2, 1.0};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(ScalarField2D(spec, Unit::unitless, {0.0, nan, 0.0, 0.0}), DomainError);
  CHECK_THROWS_AS(ScalarField2D(spec, Unit::unitless, inf), DomainError);
  CHECK_THROWS_AS(VectorField2D(spec, {0, 0, 0, inf}, {0, 0, 0, 0}), DomainError);
  CHECK_THROWS_AS(ScalarField2D(spec, Unit::unitless, std::vector<double>{1.0, 2.0}), DomainError);
}

TEST_CASE("grid spec validation") {
  CHECK_THROWS(GridSpec{0, 4, 1.0}.validate());
  CHECK_THROWS(GridSpec{4, 4, 0.0}.validate());
  CHECK_NOTHROW(GridSpec{4, 4, 5.0}.validate());
}

TEST_CASE("crop copies the window") {
  GridSpec spec{5, 4, 1.0};
  std::vector<double> v(20);
  for (std::size_t i = 0; i < 20; ++i) v[i] = double(i);
  ScalarField2D f(spec, Unit::celsius, v);
  auto c = f.crop({1, 2, 2, 3});
  CHECK(c.spec().width == 3);
  CHECK(c.spec().height == 2);
  CHECK(c.at(0, 0) == f.at(1, 2));
  CHECK(c.at(1, 2) == f.at(2, 4));
  CHECK(c.unit() == Unit::celsius);
  CHECK_THROWS(f.crop({3, 0, 2, 1}));
}

TEST_CASE("LGF1 round trip is bit exact") {
  GridSpec spec{7, 5, 2.5};
  Rng rng(11);
  std::vector<double> v(spec.cells());
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1e3, 1e3));
  ScalarField2D f(spec, Unit::celsius, v);
  FieldMeta meta;
  meta.norm_min = -1.0;
  meta.norm_max = 2.0;
  meta.provenance = {{"seed", 4}};
  auto path = scratch("t.lgf1");
  save_field(path, f, meta);
  auto back = load_field(path);
  CHECK(back.spec() == spec);
  CHECK(back.unit() == Unit::celsius);
  CHECK(std::equal(v.begin(), v.end(), back.values().begin()));
  auto m = read_meta(meta_path(path));
  CHECK(*m.norm_min == -1.0);
  CHECK(m.provenance["seed"] == 4);

  VectorField2D vf(spec, v, std::vector<double>(v.rbegin(), v.rend()));
  auto vpath = scratch("v.lgf1");
  save_vector_field(vpath, vf);
  auto vb = load_vector_field(vpath);
  CHECK(std::equal(vf.vy().begin(), vf.vy().end(), vb.vy().begin()));
}

TEST_CASE("LGF1 reader rejects damaged files") {
  auto path = scratch("bad.lgf1");
  {
    std::ofstream out(path, std::ios::binary);
    out << "LGF2garbage";
  }
  CHECK_THROWS_AS(read_lgf1(path), IoError);
  CHECK_THROWS_AS(read_lgf1(scratch("missing.lgf1")), IoError);

  LgfImage img;
  img.spec = {3, 3, 1.0};
  img.values.assign(9, 1.0f);
  write_lgf1(path, img);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
  CHECK_THROWS_AS(read_lgf1(path), IoError);
}

TEST_CASE("unit names round trip") {
  for (Unit u : {Unit::unitless, Unit::permeability_m2, Unit::head_m, Unit::celsius, Unit::meters_per_year,
                 Unit::one_hot}) {
    CHECK(unit_from_name(unit_name(u)) == u);
  }
  CHECK_THROWS(unit_from_name("furlongs"));
}
