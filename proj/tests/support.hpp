#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vmsim/phase_space.hpp"
#include "vmsim/scenario_io.hpp"

namespace vmsim::testing {

inline std::filesystem::path scenario_path(const std::string& name) {
  return std::filesystem::path(VMSIM_SCENARIO_DIR) / (name + ".json");
}

inline Scenario scenario(const std::string& name, const std::vector<std::string>& overrides = {}) {
  return load_scenario(scenario_path(name), overrides);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("vmsim_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Periodic slab without walls.
inline PhaseGrid periodic_slab(int nx, int nv, double vmax, double length = 1.0) {
  const double h = length / nx;
  return PhaseGrid(FieldGrid{{nx, 1, 1}, {h, h, h}, {true, true, true}}, CellBox{{0, 0, 0}, {nx, 1, 1}}, nv, vmax,
                   GridMode::Slab1d3v);
}

/// Slab with walls at x: one guard cell on each side of the container.
inline PhaseGrid walled_slab(int nx, int nv, double vmax, double length = 1.0) {
  const double h = length / nx;
  return PhaseGrid(FieldGrid{{nx + 2, 1, 1}, {h, h, h}, {false, true, true}}, CellBox{{1, 0, 0}, {nx + 1, 1, 1}}, nv,
                   vmax, GridMode::Slab1d3v);
}

inline Distribution random_distribution(const PhaseGrid& g, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, scale);
  Distribution d = Distribution::zeros(g);
  for (double& x : d.values) x = u(rng);
  return d;
}

}  // namespace vmsim::testing
