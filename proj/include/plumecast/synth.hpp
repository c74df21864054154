#ifndef PLUMECAST_SYNTH_HPP
#define PLUMECAST_SYNTH_HPP

#include <cstdint>

#include "plumecast/grid.hpp"

namespace plumecast::synth {

struct PerlinConfig {
  std::uint64_t seed = 0;
  int octaves = 4;
  double base_frequency = 4.0;  // lattice cycles across the domain width
  double persistence = 0.5;
  double k_min = 1.02e-11;  // m^2
  double k_max = 5.10e-9;   // m^2
  bool log_space = false;   // map noise to [log k_min, log k_max] instead

  void validate() const;
};

/// Raw fractal gradient noise sampled at cell centres, unscaled.
std::vector<double> perlin_noise(const PerlinConfig& cfg, const GridSpec& spec);

/// Perlin permeability rescaled into [k_min, k_max]. A numerically flat noise
/// sample (range below 1e-12) maps to the mid-range value.
ScalarField2D generate_permeability(const PerlinConfig& cfg, const GridSpec& spec);

/// Uniform random pump cells with pairwise Chebyshev distance >= min_spacing
/// and at least `border` cells away from the domain edge. Deterministic in
/// seed; throws DomainError when the rejection budget runs out.
PumpSet place_pumps(std::uint64_t seed, std::size_t count, const GridSpec& spec, std::size_t min_spacing = 10,
                    std::size_t border = 0);

}  // namespace plumecast::synth

#endif
