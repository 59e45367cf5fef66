#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "lwr/fundamental_diagram.hpp"

namespace lwr {

/// Uniform spatial/temporal discretization of a homogeneous road segment.
struct RoadGrid {
  std::size_t cells = 1;
  double cell_length = 1.0;  // m
  double time_step = 1.0;    // s
  std::size_t substeps_per_observation = 1;

  /// Throws std::invalid_argument when any field is out of range.
  void validate() const;
  double length() const noexcept { return cell_length * static_cast<double>(cells); }
  double observation_interval() const noexcept {
    return time_step * static_cast<double>(substeps_per_observation);
  }
};

/// Cell densities (veh/m) at simulation time `time` (s).
struct DensityState {
  std::vector<double> density;
  double time = 0.0;

  std::size_t size() const noexcept { return density.size(); }
};

/// Piecewise-constant boundary densities, one value per solver substep.
struct BoundarySeries {
  std::vector<double> left;
  std::vector<double> right;

  static BoundarySeries constant(double left, double right, std::size_t steps);
  std::size_t size() const noexcept { return left.size(); }
};

struct CflReport {
  bool satisfied = false;
  double max_wave_speed = 0.0;  // m/s
  double max_time_step = 0.0;   // h / v_max, s
};

enum class CflPolicy { strict, warn };

class CflViolationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Diagnostics accumulated across solver calls.
struct StepStats {
  std::size_t steps = 0;
  std::size_t clamp_events = 0;
  std::size_t cfl_warnings = 0;

  StepStats& operator+=(const StepStats& other) noexcept;
};

CflReport check_cfl(const FundamentalDiagram& fd, const RoadGrid& grid);

/// Godunov fluxes at the M+1 interfaces, including both virtual boundary cells.
std::vector<double> interface_fluxes(std::span<const double> density, double left, double right,
                                     const FundamentalDiagram& fd);

/// One Godunov update. Results are clamped to [0, jam density]; each clamped
/// component increments stats->clamp_events. Under CflPolicy::strict a
/// violated CFL condition throws CflViolationError.
DensityState step(const DensityState& state, double left, double right,
                  const FundamentalDiagram& fd, const RoadGrid& grid,
                  CflPolicy policy = CflPolicy::strict, StepStats* stats = nullptr);

/// `steps` sequential updates reading boundaries.left[k], boundaries.right[k].
DensityState evolve(const DensityState& state, const BoundarySeries& boundaries,
                    const FundamentalDiagram& fd, const RoadGrid& grid, std::size_t steps,
                    CflPolicy policy = CflPolicy::strict, StepStats* stats = nullptr);

/// h * sum(density).
double total_vehicles(const DensityState& state, const RoadGrid& grid);

}  // namespace lwr
