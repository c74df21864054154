#include "plumecast/tracer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <optional>
#include <string>

#include "plumecast/error.hpp"
#include "plumecast/parallel.hpp"

namespace plumecast::tracer {

std::string_view scheme_name(Scheme s) {
  switch (s) {
    case Scheme::rk2: return "rk2";
    case Scheme::rk4: return "rk4";
    case Scheme::adaptive_implicit: return "adaptive_implicit";
  }
  return "rk4";
}

Scheme scheme_from_name(std::string_view name) {
  if (name == "rk2") return Scheme::rk2;
  if (name == "rk4") return Scheme::rk4;
  if (name == "adaptive_implicit" || name == "adaptive") return Scheme::adaptive_implicit;
  throw ConfigError("trace.scheme", "unknown scheme '" + std::string(name) + "' (rk2, rk4, adaptive_implicit)");
}

std::string_view termination_name(Termination t) {
  switch (t) {
    case Termination::budget: return "budget";
    case Termination::domain_exit: return "domain_exit";
    case Termination::stagnation: return "stagnation";
  }
  return "budget";
}

void TraceConfig::validate() const {
  if (!(step > 0.0)) throw ConfigError("trace.step", "must be positive");
  if (max_steps < 1) throw ConfigError("trace.max_steps", "must be >= 1");
  if (!(adaptive_tolerance > 0.0)) throw ConfigError("trace.adaptive_tolerance", "must be positive");
}

namespace {

constexpr double kStagnationFloor = 1e-12;  // cells per step
constexpr int kStagnationSteps = 10;

struct Rhs {
  const VectorField2D& v;
  double scale;  // (m/year) -> (cells/s)

  std::optional<Vec2> operator()(Point p) const {
    auto s = v.sample(p);
    if (!s) return std::nullopt;
    return Vec2{s->x * scale, s->y * scale};
  }
};

Point add(Point p, Vec2 d, double h) { return {p.x + h * d.x, p.y + h * d.y}; }

std::optional<Point> rk2_step(const Rhs& f, Point p, double h) {
  const auto k1 = f(p);
  if (!k1) return std::nullopt;
  const auto k2 = f(add(p, *k1, 0.5 * h));
  if (!k2) return std::nullopt;
  return add(p, *k2, h);
}

std::optional<Point> rk4_step(const Rhs& f, Point p, double h) {
  const auto k1 = f(p);
  if (!k1) return std::nullopt;
  const auto k2 = f(add(p, *k1, 0.5 * h));
  if (!k2) return std::nullopt;
  const auto k3 = f(add(p, *k2, 0.5 * h));
  if (!k3) return std::nullopt;
  const auto k4 = f(add(p, *k3, h));
  if (!k4) return std::nullopt;
  return Point{p.x + h / 6.0 * (k1->x + 2.0 * k2->x + 2.0 * k3->x + k4->x),
               p.y + h / 6.0 * (k1->y + 2.0 * k2->y + 2.0 * k3->y + k4->y)};
}

// Dormand-Prince 5(4) with error control, advancing exactly by `h`.
std::optional<Point> adaptive_step(const Rhs& f, Point p, double h, double tol) {
  static constexpr double c[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1, 1};
  static constexpr double a[7][6] = {
      {},
      {1.0 / 5},
      {3.0 / 40, 9.0 / 40},
      {44.0 / 45, -56.0 / 15, 32.0 / 9},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
      {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
  static constexpr double b5[7] = {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0};
  static constexpr double b4[7] = {5179.0 / 57600, 0, 7571.0 / 16695, 393.0 / 640, -92097.0 / 339200, 187.0 / 2100,
                                   1.0 / 40};
  (void)c;
  double remaining = h;
  double dt = h;
  Point y = p;
  int guard = 0;
  while (remaining > 0.0) {
    if (++guard > 100000) return std::nullopt;
    dt = std::min(dt, remaining);
    Vec2 k[7];
    bool outside = false;
    for (int s = 0; s < 7 && !outside; ++s) {
      Point ys = y;
      for (int j = 0; j < s; ++j) ys = add(ys, k[j], dt * a[s][j]);
      const auto ks = f(ys);
      if (!ks) {
        outside = true;
        break;
      }
      k[s] = *ks;
    }
    if (outside) {
      // Shrink towards the boundary before declaring an exit.
      if (dt < h * 1e-6) return std::nullopt;
      dt *= 0.5;
      continue;
    }
    Point y5 = y, y4 = y;
    for (int s = 0; s < 7; ++s) {
      y5 = add(y5, k[s], dt * b5[s]);
      y4 = add(y4, k[s], dt * b4[s]);
    }
    const double err = std::max(std::abs(y5.x - y4.x), std::abs(y5.y - y4.y));
    if (err <= tol) {
      y = y5;
      remaining -= dt;
    }
    const double factor = err > 0.0 ? 0.9 * std::pow(tol / err, 0.2) : 5.0;
    dt *= std::clamp(factor, 0.2, 5.0);
  }
  return y;
}

}  // namespace

Streamline trace(const VectorField2D& v, Point y0, const TraceConfig& cfg) {
  cfg.validate();
  const Rhs f{v, 1.0 / (kSecondsPerYear * v.spec().cell_size)};
  if (!v.sample(y0)) {
    throw DomainError("seed (" + std::to_string(y0.x) + ", " + std::to_string(y0.y) + ") is outside the domain");
  }
  Streamline line;
  line.points.reserve(std::min<std::size_t>(cfg.max_steps + 1, 1 << 16));
  line.times.reserve(line.points.capacity());
  line.points.push_back(y0);
  line.times.push_back(0.0);
  line.terminated = Termination::budget;

  Point p = y0;
  int still = 0;
  auto advance = [&](Point from, double h) -> std::optional<Point> {
    std::optional<Point> next;
    switch (cfg.scheme) {
      case Scheme::rk2: next = rk2_step(f, from, h); break;
      case Scheme::rk4: next = rk4_step(f, from, h); break;
      case Scheme::adaptive_implicit: next = adaptive_step(f, from, h, cfg.adaptive_tolerance); break;
    }
    if (next && !v.sample(*next)) next.reset();
    return next;
  };
  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    const auto next = advance(p, cfg.step);
    if (!next) {
      // Close the line at the boundary with a bisected partial step.
      double lo = 0.0, hi = 1.0;
      std::optional<Point> last;
      for (int it = 0; it < 30; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (auto q = advance(p, mid * cfg.step)) {
          lo = mid;
          last = q;
        } else {
          hi = mid;
        }
      }
      if (last && lo > 0.0) {
        line.points.push_back(*last);
        line.times.push_back(cfg.step * (static_cast<double>(step - 1) + lo));
      }
      line.terminated = Termination::domain_exit;
      break;
    }
    const double moved = std::hypot(next->x - p.x, next->y - p.y);
    still = moved < kStagnationFloor ? still + 1 : 0;
    if (still >= kStagnationSteps) {
      line.terminated = Termination::stagnation;
      break;
    }
    p = *next;
    line.points.push_back(p);
    line.times.push_back(cfg.step * static_cast<double>(step));
  }
  return line;
}

namespace {

struct CellIndex {
  bool ok;
  std::size_t idx;
};

CellIndex cell_of(const GridSpec& spec, Point p) {
  const double c = std::round(p.x);
  const double r = std::round(p.y);
  if (c < 0 || r < 0 || c >= static_cast<double>(spec.width) || r >= static_cast<double>(spec.height)) return {false, 0};
  return {true, spec.index(static_cast<std::size_t>(r), static_cast<std::size_t>(c))};
}

}  // namespace

ScalarField2D embed(std::span<const Streamline> lines, const GridSpec& spec, double horizon, bool fade) {
  spec.validate();
  if (!(horizon > 0.0)) throw DomainError("embedding horizon must be positive");
  std::vector<double> field(spec.cells(), 0.0);
  std::vector<double> first_visit(spec.cells(), -1.0);
  std::vector<std::size_t> touched;
  for (const auto& line : lines) {
    touched.clear();
    auto visit = [&](Point p, double t) {
      const auto cell = cell_of(spec, p);
      if (!cell.ok) return;
      if (first_visit[cell.idx] < 0.0) {
        first_visit[cell.idx] = t;
        touched.push_back(cell.idx);
      }
    };
    for (std::size_t i = 0; i < line.points.size(); ++i) {
      if (i == 0) {
        visit(line.points[0], line.times[0]);
        continue;
      }
      const Point a = line.points[i - 1];
      const Point b = line.points[i];
      const double len = std::hypot(b.x - a.x, b.y - a.y);
      const auto pieces = static_cast<std::size_t>(std::ceil(len / 0.5));
      for (std::size_t k = 1; k <= pieces; ++k) {
        const double u = static_cast<double>(k) / static_cast<double>(pieces);
        visit({a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)}, line.times[i - 1] + u * (line.times[i] - line.times[i - 1]));
      }
      if (pieces == 0) visit(b, line.times[i]);
    }
    for (const std::size_t idx : touched) {
      const double value = fade ? std::clamp(1.0 - first_visit[idx] / horizon, 0.0, 1.0) : 1.0;
      field[idx] = std::max(field[idx], value);
      first_visit[idx] = -1.0;
    }
  }
  return {spec, Unit::unitless, std::move(field)};
}

std::pair<Point, Point> offset_seeds(Point y0, Vec2 flow_direction, double offset_cells) {
  const double norm = std::hypot(flow_direction.x, flow_direction.y);
  if (!(norm > 0.0)) throw DomainError("flow direction must be non-zero");
  const Vec2 perp{-flow_direction.y / norm, flow_direction.x / norm};
  return {{y0.x + offset_cells * perp.x, y0.y + offset_cells * perp.y},
          {y0.x - offset_cells * perp.x, y0.y - offset_cells * perp.y}};
}

StreamlineSet trace_all(const VectorField2D& v, const PumpSet& pumps, const TraceConfig& cfg, Vec2 flow_direction) {
  cfg.validate();
  const GridSpec& spec = v.spec();
  pumps.validate(spec);
  const std::size_t n = pumps.positions.size();
  StreamlineSet set;
  set.center.resize(n);
  set.offsets.resize(n);

  auto clamp_seed = [&](Point p, std::size_t pump) {
    const Point q{std::clamp(p.x, 0.0, static_cast<double>(spec.width - 1)),
                  std::clamp(p.y, 0.0, static_cast<double>(spec.height - 1))};
    if (q.x != p.x || q.y != p.y) {
      std::cerr << "warning: offset seed of pump " << pump << " clamped into the domain\n";
    }
    return q;
  };
  std::vector<std::pair<Point, Point>> seeds(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point y0{static_cast<double>(pumps.positions[i].col), static_cast<double>(pumps.positions[i].row)};
    auto [plus, minus] = offset_seeds(y0, flow_direction, static_cast<double>(cfg.offset_cells));
    seeds[i] = {clamp_seed(plus, i), clamp_seed(minus, i)};
  }

  std::vector<std::string> failures(n);
  parallel_for(static_cast<std::ptrdiff_t>(n), [&](std::ptrdiff_t i) {
    const auto pump = static_cast<std::size_t>(i);
    const Point y0{static_cast<double>(pumps.positions[pump].col), static_cast<double>(pumps.positions[pump].row)};
    try {
      set.center[pump] = trace(v, y0, cfg);
      set.offsets[pump] = {trace(v, seeds[pump].first, cfg), trace(v, seeds[pump].second, cfg)};
    } catch (const std::exception& e) {
      failures[pump] = e.what();
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (!failures[i].empty()) throw DomainError("pump " + std::to_string(i) + ": " + failures[i]);
  }

  std::vector<Streamline> outer;
  outer.reserve(2 * n);
  for (const auto& [a, b] : set.offsets) {
    outer.push_back(a);
    outer.push_back(b);
  }
  set.s_field = embed(set.center, spec, cfg.horizon(), cfg.fade);
  set.s_o_field = embed(outer, spec, cfg.horizon(), cfg.fade);
  return set;
}

}  // namespace plumecast::tracer
