#ifndef PLUMECAST_SIMKIT_HPP
#define PLUMECAST_SIMKIT_HPP

#include <cstddef>
#include <vector>

#include <json.hpp>

#include "plumecast/grid.hpp"

namespace plumecast::simkit {

struct HydroParams {
  double grad_p = 0.003;           // hydraulic head gradient along +x
  double fluid_viscosity = 1.0e-3; // Pa s
  double fluid_density = 1000.0;   // kg/m^3
  double gravity = 9.81;           // m/s^2
  double porosity = 0.25;
  double aquifer_thickness = 5.0;  // m, one cell layer
  double tolerance = 1e-10;        // max residual relative to the flux scale
  std::size_t max_iterations = 0;  // 0: 200 * max(width, height)

  void validate() const;
  /// Hydraulic conductivity K = k rho g / mu in m/s.
  double conductivity(double permeability) const { return permeability * fluid_density * gravity / fluid_viscosity; }
};

struct ThermalParams {
  double conductivity = 0.65;     // W/(m K)
  double density = 2800.0;        // kg/m^3
  double specific_heat = 2000.0;  // J/(kg K)
  double background_t = 10.0;     // degC
  double dispersivity = 1.0;      // m, adds dispersivity*|v| to the diffusivity
  double tolerance = 1e-10;
  std::size_t max_iterations = 0; // sweeps; 0: 200 * max(width, height)

  void validate() const;
  double diffusivity() const { return conductivity / (density * specific_heat); }
};

struct SolverReport {
  std::size_t iterations = 0;
  bool converged = false;
  double final_residual = 0.0;  // relative to the problem's flux scale
  std::vector<double> residual_history;

  nlohmann::json to_json() const;
};

struct DarcyResult {
  ScalarField2D head;      // solved head, metres
  VectorField2D velocity;  // pore velocity, m/year
  SolverReport report;
};

/// Darcy flux through every face, m/s. `east` holds (width + 1) faces per row
/// (positive along +x); `south` holds width faces per (height + 1) face rows
/// (positive along +y, i.e. downward).
struct FaceFluxes {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> east;
  std::vector<double> south;
};

/// Linear head that imposes grad_p across the domain; the CNN input p.
ScalarField2D initial_head(const GridSpec& spec, const HydroParams& hp);

/// Steady Darcy flow with pump injection, cell-centred finite volumes with
/// harmonic face conductivities, Dirichlet heads on the x ends, no flow on
/// the y ends. Solved by Jacobi-preconditioned conjugate gradients.
DarcyResult darcy_solve(const ScalarField2D& permeability, const PumpSet& pumps, const HydroParams& hp);

FaceFluxes face_fluxes(const ScalarField2D& permeability, const HydroParams& hp, const ScalarField2D& head);

/// Largest per-cell |net outflow - injection| divided by the flux scale used
/// for the convergence test.
double mass_balance_error(const ScalarField2D& permeability, const PumpSet& pumps, const HydroParams& hp,
                          const ScalarField2D& head);

struct HeatResult {
  ScalarField2D temperature;  // degC
  SolverReport report;
};

/// Steady advection-diffusion of injected heat with first-order upwinding,
/// written in advective form so every cell is a convex combination of its
/// upwind neighbours and the injection temperature.
HeatResult heat_transport(const VectorField2D& velocity, const PumpSet& pumps, const ThermalParams& tp,
                          const HydroParams& hp);

/// L v / alpha with L in metres and v in m/s.
double peclet(double length, double velocity, const ThermalParams& tp);

}  // namespace plumecast::simkit

#endif
