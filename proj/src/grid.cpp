#include "plumecast/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "plumecast/error.hpp"

namespace plumecast {

namespace {

constexpr std::pair<Unit, std::string_view> kUnitNames[] = {
    {Unit::unitless, "unitless"},
    {Unit::permeability_m2, "m2"},
    {Unit::head_m, "m"},
    {Unit::celsius, "degC"},
    {Unit::meters_per_year, "m/y"},
    {Unit::one_hot, "one_hot"},
};

void require_finite(std::span<const double> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw DomainError(std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

}  // namespace

std::string_view unit_name(Unit u) {
  for (const auto& [unit, name] : kUnitNames) {
    if (unit == u) return name;
  }
  return "unitless";
}

Unit unit_from_name(std::string_view name) {
  for (const auto& [unit, n] : kUnitNames) {
    if (n == name) return unit;
  }
  throw ConfigError("unit", "unknown unit tag '" + std::string(name) + "'");
}

void GridSpec::validate() const {
  if (width < 1 || height < 1) throw DomainError("grid must have at least one cell per axis");
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) throw DomainError("cell_size must be positive");
}

bool in_bounds(const GridSpec& spec, Cell c) {
  return c.row >= 0 && c.col >= 0 && c.row < static_cast<std::int64_t>(spec.height) &&
         c.col < static_cast<std::int64_t>(spec.width);
}

ScalarField2D::ScalarField2D(GridSpec spec, Unit unit, std::vector<double> values)
    : spec_(spec), unit_(unit), values_(std::move(values)) {
  spec_.validate();
  if (values_.size() != spec_.cells()) {
    throw DomainError("field has " + std::to_string(values_.size()) + " values, grid needs " +
                      std::to_string(spec_.cells()));
  }
  require_finite(values_, "scalar field");
}

ScalarField2D::ScalarField2D(GridSpec spec, Unit unit, double fill)
    : ScalarField2D(spec, unit, std::vector<double>(spec.cells(), fill)) {}

double ScalarField2D::min() const { return *std::min_element(values_.begin(), values_.end()); }
double ScalarField2D::max() const { return *std::max_element(values_.begin(), values_.end()); }
double ScalarField2D::sum() const { return std::accumulate(values_.begin(), values_.end(), 0.0); }

namespace {

std::vector<double> crop_values(std::span<const double> src, const GridSpec& spec, const Region& r) {
  if (r.height == 0 || r.width == 0 || r.row0 + r.height > spec.height || r.col0 + r.width > spec.width) {
    throw ShapeError("crop region exceeds the " + std::to_string(spec.width) + "x" +
                     std::to_string(spec.height) + " grid");
  }
  std::vector<double> out;
  out.reserve(r.height * r.width);
  for (std::size_t row = 0; row < r.height; ++row) {
    const auto* begin = src.data() + spec.index(r.row0 + row, r.col0);
    out.insert(out.end(), begin, begin + r.width);
  }
  return out;
}

}  // namespace

ScalarField2D ScalarField2D::crop(const Region& r) const {
  GridSpec s{r.width, r.height, spec_.cell_size};
  return ScalarField2D(s, unit_, crop_values(values_, spec_, r));
}

VectorField2D::VectorField2D(GridSpec spec, std::vector<double> vx, std::vector<double> vy)
    : spec_(spec), vx_(std::move(vx)), vy_(std::move(vy)) {
  spec_.validate();
  if (vx_.size() != spec_.cells() || vy_.size() != spec_.cells()) {
    throw DomainError("velocity channels do not match the grid");
  }
  require_finite(vx_, "vx");
  require_finite(vy_, "vy");
}

VectorField2D::VectorField2D(const ScalarField2D& vx, const ScalarField2D& vy)
    : VectorField2D(vx.spec(), {vx.values().begin(), vx.values().end()},
                    {vy.values().begin(), vy.values().end()}) {
  if (!(vx.spec() == vy.spec())) throw DomainError("vx and vy grids differ");
}

ScalarField2D VectorField2D::vx_field() const { return {spec_, Unit::meters_per_year, vx_}; }
ScalarField2D VectorField2D::vy_field() const { return {spec_, Unit::meters_per_year, vy_}; }

VectorField2D VectorField2D::crop(const Region& r) const {
  GridSpec s{r.width, r.height, spec_.cell_size};
  return {s, crop_values(vx_, spec_, r), crop_values(vy_, spec_, r)};
}

std::optional<Vec2> VectorField2D::sample(Point pos) const {
  const double xmax = static_cast<double>(spec_.width - 1);
  const double ymax = static_cast<double>(spec_.height - 1);
  if (!(pos.x >= 0.0 && pos.x <= xmax && pos.y >= 0.0 && pos.y <= ymax)) return std::nullopt;

  auto base = [](double p, std::size_t n) {
    if (n == 1) return std::size_t{0};
    return std::min(static_cast<std::size_t>(p), n - 2);
  };
  const std::size_t c0 = base(pos.x, spec_.width);
  const std::size_t r0 = base(pos.y, spec_.height);
  const std::size_t c1 = std::min(c0 + 1, spec_.width - 1);
  const std::size_t r1 = std::min(r0 + 1, spec_.height - 1);
  const double fx = pos.x - static_cast<double>(c0);
  const double fy = pos.y - static_cast<double>(r0);

  auto lerp2 = [&](const std::vector<double>& f) {
    const double top = (1.0 - fx) * f[spec_.index(r0, c0)] + fx * f[spec_.index(r0, c1)];
    const double bottom = (1.0 - fx) * f[spec_.index(r1, c0)] + fx * f[spec_.index(r1, c1)];
    return (1.0 - fy) * top + fy * bottom;
  };
  return Vec2{lerp2(vx_), lerp2(vy_)};
}

void PumpSet::validate(const GridSpec& spec) const {
  if (!(injection_rate > 0.0)) throw DomainError("injection_rate must be positive");
  if (!std::isfinite(injection_delta_t)) throw DomainError("injection_delta_t must be finite");
  std::set<Cell> seen;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Cell c = positions[i];
    if (!in_bounds(spec, c)) {
      throw DomainError("pump " + std::to_string(i) + " at (" + std::to_string(c.row) + ", " +
                        std::to_string(c.col) + ") is outside the grid");
    }
    if (!seen.insert(c).second) throw DomainError("pump " + std::to_string(i) + " duplicates another pump");
  }
}

ScalarField2D rasterize_pumps(const PumpSet& pumps, const GridSpec& spec) {
  spec.validate();
  pumps.validate(spec);
  std::vector<double> v(spec.cells(), 0.0);
  for (const Cell c : pumps.positions) {
    v[spec.index(static_cast<std::size_t>(c.row), static_cast<std::size_t>(c.col))] = 1.0;
  }
  return {spec, Unit::one_hot, std::move(v)};
}

std::vector<Cell> pump_cells(const ScalarField2D& one_hot) {
  std::vector<Cell> out;
  const auto& s = one_hot.spec();
  for (std::size_t r = 0; r < s.height; ++r) {
    for (std::size_t c = 0; c < s.width; ++c) {
      if (one_hot.at(r, c) > 0.5) out.push_back({static_cast<std::int64_t>(r), static_cast<std::int64_t>(c)});
    }
  }
  return out;
}

}  // namespace plumecast
