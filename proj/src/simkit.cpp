#include "plumecast/simkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "plumecast/error.hpp"

namespace plumecast::simkit {

void HydroParams::validate() const {
  if (!(grad_p >= 0.0)) throw ConfigError("hydro.grad_p", "must be non-negative");
  if (!(fluid_viscosity > 0.0)) throw ConfigError("hydro.fluid_viscosity", "must be positive");
  if (!(fluid_density > 0.0)) throw ConfigError("hydro.fluid_density", "must be positive");
  if (!(gravity > 0.0)) throw ConfigError("hydro.gravity", "must be positive");
  if (!(porosity > 0.0 && porosity <= 1.0)) throw ConfigError("hydro.porosity", "must lie in (0, 1]");
  if (!(aquifer_thickness > 0.0)) throw ConfigError("hydro.aquifer_thickness", "must be positive");
  if (!(tolerance > 0.0)) throw ConfigError("hydro.tolerance", "must be positive");
}

void ThermalParams::validate() const {
  if (!(conductivity > 0.0)) throw ConfigError("thermal.conductivity", "must be positive");
  if (!(density > 0.0)) throw ConfigError("thermal.density", "must be positive");
  if (!(specific_heat > 0.0)) throw ConfigError("thermal.specific_heat", "must be positive");
  if (!std::isfinite(background_t)) throw ConfigError("thermal.background_t", "must be finite");
  if (!(dispersivity >= 0.0)) throw ConfigError("thermal.dispersivity", "must be non-negative");
  if (!(tolerance > 0.0)) throw ConfigError("thermal.tolerance", "must be positive");
}

nlohmann::json SolverReport::to_json() const {
  return {{"iterations", iterations},
          {"converged", converged},
          {"final_residual", final_residual},
          {"residual_history", residual_history}};
}

namespace {

std::size_t budget(std::size_t configured, const GridSpec& spec) {
  return configured ? configured : 200 * std::max(spec.width, spec.height);
}

/// Five-point stencil of the head equation, per-volume rates (1/s per metre of head).
struct DarcyStencil {
  GridSpec spec;
  std::vector<double> cond;  // K per cell
  std::vector<double> gw, ge, gn, gs;  // face conductances; boundary faces included in gw/ge
  std::vector<double> diag;
  std::vector<double> source;  // injection rate per volume, 1/s
  double h_left = 0.0;
  double h_right = 0.0;
  double flux_scale = 1.0;

  DarcyStencil(const ScalarField2D& k, const PumpSet& pumps, const HydroParams& hp) : spec(k.spec()) {
    const std::size_t n = spec.cells();
    const double dx2 = spec.cell_size * spec.cell_size;
    cond.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(k[i] > 0.0)) throw DomainError("permeability must be positive (cell " + std::to_string(i) + ")");
      cond[i] = hp.conductivity(k[i]);
    }
    auto harmonic = [](double a, double b) { return 2.0 * a * b / (a + b); };
    gw.assign(n, 0.0);
    ge.assign(n, 0.0);
    gn.assign(n, 0.0);
    gs.assign(n, 0.0);
    for (std::size_t r = 0; r < spec.height; ++r) {
      for (std::size_t c = 0; c < spec.width; ++c) {
        const std::size_t i = spec.index(r, c);
        gw[i] = c == 0 ? 2.0 * cond[i] / dx2 : harmonic(cond[i], cond[i - 1]) / dx2;
        ge[i] = c + 1 == spec.width ? 2.0 * cond[i] / dx2 : harmonic(cond[i], cond[i + 1]) / dx2;
        if (r > 0) gn[i] = harmonic(cond[i], cond[i - spec.width]) / dx2;
        if (r + 1 < spec.height) gs[i] = harmonic(cond[i], cond[i + spec.width]) / dx2;
      }
    }
    diag.resize(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = gw[i] + ge[i] + gn[i] + gs[i];

    source.assign(n, 0.0);
    const double volume = dx2 * hp.aquifer_thickness;
    for (const Cell p : pumps.positions) {
      source[spec.index(static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col))] += pumps.injection_rate / volume;
    }
    h_left = hp.grad_p * static_cast<double>(spec.width) * spec.cell_size;
    h_right = 0.0;

    const double mean_k = std::accumulate(cond.begin(), cond.end(), 0.0) / static_cast<double>(n);
    const double max_src = *std::max_element(source.begin(), source.end());
    flux_scale = std::max(mean_k * hp.grad_p / spec.cell_size, max_src);
    if (!(flux_scale > 0.0)) flux_scale = 1.0;
  }

  // y = A x (Dirichlet contributions excluded)
  void apply(const std::vector<double>& x, std::vector<double>& y) const {
    const std::size_t w = spec.width;
    for (std::size_t r = 0; r < spec.height; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t i = r * w + c;
        double acc = diag[i] * x[i];
        if (c > 0) acc -= gw[i] * x[i - 1];
        if (c + 1 < w) acc -= ge[i] * x[i + 1];
        if (r > 0) acc -= gn[i] * x[i - w];
        if (r + 1 < spec.height) acc -= gs[i] * x[i + w];
        y[i] = acc;
      }
    }
  }

  std::vector<double> rhs() const {
    std::vector<double> b = source;
    for (std::size_t r = 0; r < spec.height; ++r) {
      b[spec.index(r, 0)] += gw[spec.index(r, 0)] * h_left;
      b[spec.index(r, spec.width - 1)] += ge[spec.index(r, spec.width - 1)] * h_right;
    }
    return b;
  }
};

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

ScalarField2D initial_head(const GridSpec& spec, const HydroParams& hp) {
  spec.validate();
  const double length = static_cast<double>(spec.width) * spec.cell_size;
  std::vector<double> h(spec.cells());
  for (std::size_t r = 0; r < spec.height; ++r) {
    for (std::size_t c = 0; c < spec.width; ++c) {
      const double x = (static_cast<double>(c) + 0.5) * spec.cell_size;
      h[spec.index(r, c)] = hp.grad_p * (length - x);
    }
  }
  return {spec, Unit::head_m, std::move(h)};
}

DarcyResult darcy_solve(const ScalarField2D& permeability, const PumpSet& pumps, const HydroParams& hp) {
  hp.validate();
  const GridSpec& spec = permeability.spec();
  pumps.validate(spec);
  const DarcyStencil st(permeability, pumps, hp);
  const std::size_t n = spec.cells();

  auto init = initial_head(spec, hp);
  std::vector<double> x(init.values().begin(), init.values().end());
  const std::vector<double> b = st.rhs();
  std::vector<double> r(n), z(n), p(n), ap(n);

  auto true_residual = [&] {
    st.apply(x, ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  };
  true_residual();

  SolverReport report;
  const std::size_t max_it = budget(hp.max_iterations, spec);
  const double target = hp.tolerance * st.flux_scale;
  double res = max_abs(r);
  report.residual_history.push_back(res / st.flux_scale);

  auto restart = [&] {
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / st.diag[i];
    p = z;
    return dot(r, z);
  };
  double rz = restart();
  while (res > target && report.iterations < max_it) {
    st.apply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) break;
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    ++report.iterations;
    res = max_abs(r);
    if (res <= target) {
      // Guard against drift of the recursive residual.
      true_residual();
      res = max_abs(r);
      if (res > target) {
        rz = restart();
        report.residual_history.push_back(res / st.flux_scale);
        continue;
      }
    }
    report.residual_history.push_back(res / st.flux_scale);
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / st.diag[i];
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  report.final_residual = res / st.flux_scale;
  report.converged = res <= target;
  if (!report.converged) {
    throw ConvergenceError("Darcy solve did not converge in " + std::to_string(report.iterations) +
                               " iterations (residual " + std::to_string(report.final_residual) + ")",
                           report.residual_history);
  }

  ScalarField2D head(spec, Unit::head_m, x);
  const auto faces = face_fluxes(permeability, hp, head);
  std::vector<double> vx(n), vy(n);
  const double to_pore_per_year = kSecondsPerYear / hp.porosity;
  for (std::size_t row = 0; row < spec.height; ++row) {
    for (std::size_t c = 0; c < spec.width; ++c) {
      const std::size_t i = spec.index(row, c);
      vx[i] = 0.5 * (faces.east[row * (spec.width + 1) + c] + faces.east[row * (spec.width + 1) + c + 1]) *
              to_pore_per_year;
      vy[i] = 0.5 * (faces.south[row * spec.width + c] + faces.south[(row + 1) * spec.width + c]) * to_pore_per_year;
    }
  }
  return {std::move(head), VectorField2D(spec, std::move(vx), std::move(vy)), std::move(report)};
}

FaceFluxes face_fluxes(const ScalarField2D& permeability, const HydroParams& hp, const ScalarField2D& head) {
  const GridSpec& spec = permeability.spec();
  if (!(head.spec() == spec)) throw ShapeError("head and permeability grids differ");
  const DarcyStencil st(permeability, PumpSet{}, hp);
  const double dx = spec.cell_size;
  FaceFluxes f{spec.width, spec.height, std::vector<double>((spec.width + 1) * spec.height, 0.0),
               std::vector<double>(spec.width * (spec.height + 1), 0.0)};
  for (std::size_t r = 0; r < spec.height; ++r) {
    for (std::size_t c = 0; c <= spec.width; ++c) {
      double q;
      if (c == 0) {
        const std::size_t i = spec.index(r, 0);
        q = st.gw[i] * dx * (st.h_left - head[i]);
      } else if (c == spec.width) {
        const std::size_t i = spec.index(r, c - 1);
        q = st.ge[i] * dx * (head[i] - st.h_right);
      } else {
        const std::size_t i = spec.index(r, c - 1);
        q = st.ge[i] * dx * (head[i] - head[i + 1]);
      }
      f.east[r * (spec.width + 1) + c] = q;
    }
  }
  for (std::size_t r = 1; r < spec.height; ++r) {
    for (std::size_t c = 0; c < spec.width; ++c) {
      const std::size_t i = spec.index(r - 1, c);
      f.south[r * spec.width + c] = st.gs[i] * dx * (head[i] - head[i + spec.width]);
    }
  }
  return f;
}

double mass_balance_error(const ScalarField2D& permeability, const PumpSet& pumps, const HydroParams& hp,
                          const ScalarField2D& head) {
  const GridSpec& spec = permeability.spec();
  const DarcyStencil st(permeability, pumps, hp);
  const auto f = face_fluxes(permeability, hp, head);
  const double dx = spec.cell_size;
  double worst = 0.0;
  for (std::size_t r = 0; r < spec.height; ++r) {
    for (std::size_t c = 0; c < spec.width; ++c) {
      const double out = f.east[r * (spec.width + 1) + c + 1] - f.east[r * (spec.width + 1) + c] +
                         f.south[(r + 1) * spec.width + c] - f.south[r * spec.width + c];
      worst = std::max(worst, std::abs(out / dx - st.source[spec.index(r, c)]));
    }
  }
  return worst / st.flux_scale;
}

HeatResult heat_transport(const VectorField2D& velocity, const PumpSet& pumps, const ThermalParams& tp,
                          const HydroParams& hp) {
  tp.validate();
  hp.validate();
  const GridSpec& spec = velocity.spec();
  pumps.validate(spec);
  const std::size_t n = spec.cells();
  const std::size_t w = spec.width;
  const std::size_t h = spec.height;
  const double dx = spec.cell_size;
  const double alpha = tp.diffusivity();

  HeatResult result{ScalarField2D(spec, Unit::celsius, tp.background_t), {}};
  if (pumps.positions.empty()) {
    result.report.converged = true;
    return result;
  }

  std::vector<double> vx(n), vy(n), speed(n);
  for (std::size_t i = 0; i < n; ++i) {
    vx[i] = velocity.vx()[i] / kSecondsPerYear;
    vy[i] = velocity.vy()[i] / kSecondsPerYear;
    speed[i] = std::hypot(vx[i], vy[i]);
  }
  const double volume = dx * dx * hp.aquifer_thickness;
  std::vector<double> source(n, 0.0);
  for (const Cell p : pumps.positions) {
    source[spec.index(static_cast<std::size_t>(p.row), static_cast<std::size_t>(p.col))] +=
        pumps.injection_rate / (volume * hp.porosity);
  }

  // Upwind + diffusion coefficients of each neighbour, and the diagonal.
  std::vector<double> aw(n, 0.0), ae(n, 0.0), an(n, 0.0), as(n, 0.0), ap(n, 0.0);
  auto diffusion = [&](std::size_t i, std::size_t j) {
    return (alpha + tp.dispersivity * 0.5 * (speed[i] + speed[j])) / (dx * dx);
  };
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t i = r * w + c;
      double boundary_inflow = 0.0;
      if (c > 0) {
        aw[i] = std::max(0.5 * (vx[i] + vx[i - 1]), 0.0) / dx + diffusion(i, i - 1);
      } else {
        boundary_inflow += std::max(vx[i], 0.0) / dx;
      }
      if (c + 1 < w) {
        ae[i] = std::max(-0.5 * (vx[i] + vx[i + 1]), 0.0) / dx + diffusion(i, i + 1);
      } else {
        boundary_inflow += std::max(-vx[i], 0.0) / dx;
      }
      if (r > 0) {
        an[i] = std::max(0.5 * (vy[i] + vy[i - w]), 0.0) / dx + diffusion(i, i - w);
      } else {
        boundary_inflow += std::max(vy[i], 0.0) / dx;
      }
      if (r + 1 < h) {
        as[i] = std::max(-0.5 * (vy[i] + vy[i + w]), 0.0) / dx + diffusion(i, i + w);
      } else {
        boundary_inflow += std::max(-vy[i], 0.0) / dx;
      }
      ap[i] = aw[i] + ae[i] + an[i] + as[i] + boundary_inflow + source[i];
    }
  }

  // Excess temperature over background; boundary inflow carries zero excess.
  const double delta = pumps.injection_delta_t;
  std::vector<double> theta(n, 0.0);
  auto neighbours = [&](std::size_t r, std::size_t c) {
    const std::size_t i = r * w + c;
    double acc = source[i] * delta;
    if (c > 0) acc += aw[i] * theta[i - 1];
    if (c + 1 < w) acc += ae[i] * theta[i + 1];
    if (r > 0) acc += an[i] * theta[i - w];
    if (r + 1 < h) acc += as[i] * theta[i + w];
    return acc;
  };
  auto relax = [&](std::size_t r, std::size_t c) {
    const std::size_t i = r * w + c;
    theta[i] = ap[i] > 0.0 ? neighbours(r, c) / ap[i] : 0.0;
  };
  auto sweep = [&](bool rows_down, bool cols_right) {
    for (std::size_t rr = 0; rr < h; ++rr) {
      const std::size_t r = rows_down ? rr : h - 1 - rr;
      for (std::size_t cc = 0; cc < w; ++cc) relax(r, cols_right ? cc : w - 1 - cc);
    }
  };
  auto residual = [&] {
    double worst = 0.0;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t i = r * w + c;
        if (ap[i] > 0.0) worst = std::max(worst, std::abs(ap[i] * theta[i] - neighbours(r, c)) / ap[i]);
      }
    }
    return worst / std::abs(delta);
  };

  auto& report = result.report;
  const std::size_t max_it = budget(tp.max_iterations, spec);
  double res = residual();
  report.residual_history.push_back(res);
  while (res > tp.tolerance && report.iterations < max_it) {
    sweep(true, true);
    sweep(false, true);
    sweep(true, false);
    sweep(false, false);
    report.iterations += 4;
    res = residual();
    report.residual_history.push_back(res);
  }
  report.final_residual = res;
  report.converged = res <= tp.tolerance;
  if (!report.converged) {
    throw ConvergenceError("heat transport did not converge in " + std::to_string(report.iterations) + " sweeps",
                           report.residual_history);
  }
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = tp.background_t + theta[i];
  result.temperature = ScalarField2D(spec, Unit::celsius, std::move(t));
  return result;
}

double peclet(double length, double velocity, const ThermalParams& tp) {
  if (!(length > 0.0)) throw DomainError("characteristic length must be positive");
  return length * velocity / tp.diffusivity();
}

}  // namespace plumecast::simkit
