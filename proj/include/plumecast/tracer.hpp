#ifndef PLUMECAST_TRACER_HPP
#define PLUMECAST_TRACER_HPP

#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "plumecast/grid.hpp"

namespace plumecast::tracer {

enum class Scheme { rk2, rk4, adaptive_implicit };

std::string_view scheme_name(Scheme s);
Scheme scheme_from_name(std::string_view name);

struct TraceConfig {
  Scheme scheme = Scheme::rk4;
  double step = 86400.0;  // seconds
  std::size_t max_steps = 10000;
  std::size_t offset_cells = 10;
  bool fade = true;                // false writes 1.0 to every visited cell
  double adaptive_tolerance = 1e-9; // absolute, in cells, for the embedded pair

  void validate() const;
  double horizon() const { return step * static_cast<double>(max_steps); }
};

enum class Termination { budget, domain_exit, stagnation };

std::string_view termination_name(Termination t);

struct Streamline {
  std::vector<Point> points;  // continuous cell coordinates
  std::vector<double> times;  // cumulative seconds, starts at 0
  Termination terminated = Termination::budget;
};

struct StreamlineSet {
  std::vector<Streamline> center;
  std::vector<std::pair<Streamline, Streamline>> offsets;  // (+offset, -offset)
  ScalarField2D s_field;
  ScalarField2D s_o_field;
};

/// Integrates dy/dt = v(y) from y0. Velocity is sampled bilinearly and
/// converted from m/year to cells per second.
Streamline trace(const VectorField2D& v, Point y0, const TraceConfig& cfg);

/// Rasterizes streamlines with values 1 - t/horizon; overlapping lines
/// combine by per-cell maximum. With fade = false every visited cell is 1.
ScalarField2D embed(std::span<const Streamline> lines, const GridSpec& spec, double horizon, bool fade = true);

/// Seeds displaced by +/- offset_cells perpendicular to `flow_direction`.
std::pair<Point, Point> offset_seeds(Point y0, Vec2 flow_direction, double offset_cells);

/// Centre and offset streamlines for every pump, plus their embeddings.
StreamlineSet trace_all(const VectorField2D& v, const PumpSet& pumps, const TraceConfig& cfg,
                        Vec2 flow_direction = {1.0, 0.0});

}  // namespace plumecast::tracer

#endif
