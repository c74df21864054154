#ifndef PLUMECAST_GRID_HPP
#define PLUMECAST_GRID_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace plumecast {

inline constexpr double kSecondsPerYear = 365.25 * 86400.0;

enum class Unit {
  unitless,
  permeability_m2,
  head_m,
  celsius,
  meters_per_year,
  one_hot,
};

std::string_view unit_name(Unit u);
Unit unit_from_name(std::string_view name);

/// Uniform square-cell raster geometry. Row-major, origin top-left, y down.
struct GridSpec {
  std::size_t width = 1;
  std::size_t height = 1;
  double cell_size = 1.0;

  void validate() const;
  std::size_t cells() const { return width * height; }
  std::size_t index(std::size_t row, std::size_t col) const { return row * width + col; }
  bool operator==(const GridSpec&) const = default;
};

/// Integer cell index.
struct Cell {
  std::int64_t row = 0;
  std::int64_t col = 0;
  bool operator==(const Cell&) const = default;
  auto operator<=>(const Cell&) const = default;
};

/// Continuous position in cell units; cell (r, c) has its centre at (x=c, y=r).
struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

bool in_bounds(const GridSpec& spec, Cell c);

/// Rectangular sub-window of a grid, in cells.
struct Region {
  std::size_t row0 = 0;
  std::size_t col0 = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  bool operator==(const Region&) const = default;
};

class ScalarField2D {
 public:
  ScalarField2D() = default;
  /// Throws DomainError on size mismatch or non-finite values.
  ScalarField2D(GridSpec spec, Unit unit, std::vector<double> values);
  ScalarField2D(GridSpec spec, Unit unit, double fill);

  const GridSpec& spec() const { return spec_; }
  Unit unit() const { return unit_; }
  std::span<const double> values() const { return values_; }
  double at(std::size_t row, std::size_t col) const { return values_[spec_.index(row, col)]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double min() const;
  double max() const;
  double sum() const;

  ScalarField2D crop(const Region& r) const;

 private:
  GridSpec spec_{};
  Unit unit_ = Unit::unitless;
  std::vector<double> values_;
};

/// Pore velocity in metres per year.
class VectorField2D {
 public:
  VectorField2D() = default;
  VectorField2D(GridSpec spec, std::vector<double> vx, std::vector<double> vy);
  VectorField2D(const ScalarField2D& vx, const ScalarField2D& vy);

  const GridSpec& spec() const { return spec_; }
  std::span<const double> vx() const { return vx_; }
  std::span<const double> vy() const { return vy_; }
  ScalarField2D vx_field() const;
  ScalarField2D vy_field() const;
  VectorField2D crop(const Region& r) const;

  /// Bilinear interpolation between cell centres. nullopt signals that `pos`
  /// left [0, width-1] x [0, height-1].
  std::optional<Vec2> sample(Point pos) const;

 private:
  GridSpec spec_{};
  std::vector<double> vx_;
  std::vector<double> vy_;
};

struct PumpSet {
  std::vector<Cell> positions;
  double injection_rate = 0.00024;  // m^3/s
  double injection_delta_t = 5.0;   // degC above ambient

  /// Throws DomainError naming the offending index.
  void validate(const GridSpec& spec) const;
};

ScalarField2D rasterize_pumps(const PumpSet& pumps, const GridSpec& spec);

/// Recovers pump cells from a one-hot field (cells with value > 0.5).
std::vector<Cell> pump_cells(const ScalarField2D& one_hot);

}  // namespace plumecast

#endif
