#include "lwr/godunov.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lwr {

void RoadGrid::validate() const {
  if (cells < 1) {
    throw std::invalid_argument("road grid: at least one cell required");
  }
  if (!(cell_length > 0.0) || !std::isfinite(cell_length)) {
    throw std::invalid_argument("road grid: cell length must be positive");
  }
  if (!(time_step > 0.0) || !std::isfinite(time_step)) {
    throw std::invalid_argument("road grid: time step must be positive");
  }
  if (substeps_per_observation < 1) {
    throw std::invalid_argument("road grid: substeps per observation must be >= 1");
  }
}

BoundarySeries BoundarySeries::constant(double left, double right, std::size_t steps) {
  return {std::vector<double>(steps, left), std::vector<double>(steps, right)};
}

StepStats& StepStats::operator+=(const StepStats& other) noexcept {
  steps += other.steps;
  clamp_events += other.clamp_events;
  cfl_warnings += other.cfl_warnings;
  return *this;
}

CflReport check_cfl(const FundamentalDiagram& fd, const RoadGrid& grid) {
  CflReport report;
  report.max_wave_speed = fd.max_wave_speed();
  report.max_time_step = grid.cell_length / report.max_wave_speed;
  report.satisfied = grid.time_step <= report.max_time_step;
  return report;
}

std::vector<double> interface_fluxes(std::span<const double> density, double left, double right,
                                     const FundamentalDiagram& fd) {
  const std::size_t m = density.size();
  std::vector<double> flux(m + 1);
  flux[0] = fd.godunov_flux(left, m > 0 ? density[0] : right);
  for (std::size_t i = 1; i < m; ++i) {
    flux[i] = fd.godunov_flux(density[i - 1], density[i]);
  }
  if (m > 0) {
    flux[m] = fd.godunov_flux(density[m - 1], right);
  }
  return flux;
}

DensityState step(const DensityState& state, double left, double right,
                  const FundamentalDiagram& fd, const RoadGrid& grid, CflPolicy policy,
                  StepStats* stats) {
  if (state.size() != grid.cells) {
    throw std::invalid_argument("godunov step: state size does not match grid");
  }
  const auto cfl = check_cfl(fd, grid);
  if (!cfl.satisfied) {
    if (policy == CflPolicy::strict) {
      std::ostringstream os;
      os.precision(9);
      os << "CFL violated: time step " << grid.time_step << " s exceeds h/v_max = "
         << cfl.max_time_step << " s";
      throw CflViolationError(os.str());
    }
    if (stats) ++stats->cfl_warnings;
  }

  const auto flux = interface_fluxes(state.density, left, right, fd);
  const double ratio = grid.time_step / grid.cell_length;
  const double jam = fd.jam_density();

  DensityState next;
  next.time = state.time + grid.time_step;
  next.density.resize(state.size());
  std::size_t clamps = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double updated = state.density[i] + ratio * (flux[i] - flux[i + 1]);
    const double clamped = std::clamp(updated, 0.0, jam);
    if (clamped != updated) ++clamps;
    next.density[i] = clamped;
  }
  if (stats) {
    ++stats->steps;
    stats->clamp_events += clamps;
  }
  return next;
}

DensityState evolve(const DensityState& state, const BoundarySeries& boundaries,
                    const FundamentalDiagram& fd, const RoadGrid& grid, std::size_t steps,
                    CflPolicy policy, StepStats* stats) {
  if (boundaries.left.size() < steps || boundaries.right.size() < steps) {
    throw std::invalid_argument("godunov evolve: boundary series shorter than horizon");
  }
  DensityState current = state;
  for (std::size_t k = 0; k < steps; ++k) {
    current = step(current, boundaries.left[k], boundaries.right[k], fd, grid, policy, stats);
  }
  return current;
}

double total_vehicles(const DensityState& state, const RoadGrid& grid) {
  return grid.cell_length * std::accumulate(state.density.begin(), state.density.end(), 0.0);
}

}  // namespace lwr
