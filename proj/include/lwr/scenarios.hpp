#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lwr/filter.hpp"
#include "lwr/fundamental_diagram.hpp"
#include "lwr/godunov.hpp"

namespace lwr {

/// Piecewise-constant function of time. at(t) returns the value of the last
/// breakpoint whose start is <= t (the first value before the first start).
template <typename T>
struct Schedule {
  std::vector<std::pair<double, T>> points;

  Schedule() = default;
  explicit Schedule(T value) : points{{0.0, std::move(value)}} {}
  Schedule(std::initializer_list<std::pair<double, T>> init) : points(init) {}

  const T& at(double t) const {
    if (points.empty()) throw std::logic_error("schedule is empty");
    const T* current = &points.front().second;
    for (const auto& [start, value] : points) {
      if (start <= t) current = &value;
    }
    return *current;
  }
};

/// Everything needed to produce a synthetic run.
struct ScenarioConfig {
  RoadGrid grid;
  Schedule<FundamentalDiagram> fd_schedule;
  Schedule<double> left_boundary;
  Schedule<double> right_boundary;
  NoiseSpec noise;
  std::vector<std::size_t> sensor_cells;
  double horizon = 0.0;          // s
  double initial_density = 0.0;  // veh/m, uniform
  std::uint64_t seed = 0;
  CflPolicy cfl_policy = CflPolicy::strict;

  /// Throws std::invalid_argument on inconsistent fields and, under the strict
  /// policy, CflViolationError when a scheduled diagram violates CFL.
  void validate() const;
};

/// Deterministic true trajectory plus noisy observations, one entry per frame.
struct SyntheticScenario {
  ScenarioConfig config;
  ObservationModel observation;
  DensityState initial;
  std::vector<DensityState> truth;
  std::vector<FundamentalDiagram> true_fd;
  std::vector<ObservationFrame> frames;
  StepStats stats;
};

/// Runs the Godunov solver under the scheduled diagrams. Observations are
/// H * truth + N(0, v) noise, limited to [0, jam density].
SyntheticScenario simulate_scenario(const ScenarioConfig& config);

/// Overrides for the calibration run. Fields marked approximate (and the
/// parameter schedule) are illustrative choices, not measured values.
struct CalibrationOptions {
  double road_length = 1500.0;
  std::size_t cells = 5;
  double time_step = 5.0;
  std::size_t substeps_per_observation = 1;
  double horizon = 1600.0;
  double initial_density = 0.01;
  double inflow_density = 0.02;       // approximate
  double inflow_end = 900.0;          // approximate
  double outflow_free_density = 0.01; // approximate
  double congestion_start = 180.0;
  double congestion_density = 0.145;
  double congestion_end = 600.0;
  double observation_sd = 0.8e-2;
  double evolution_sd = 0.1e-2;
  std::vector<std::size_t> sensor_cells{1, 5};
  Schedule<FundamentalDiagram> fd_schedule = default_fd_schedule();
  std::uint64_t seed = 0;

  static Schedule<FundamentalDiagram> default_fd_schedule();
};

ScenarioConfig calibration_config(const CalibrationOptions& options = {});
SyntheticScenario generate_calibration_scenario(const CalibrationOptions& options = {});

/// Filter-side defaults that go with a scenario.
struct LearningSetup {
  ParameterPrior prior;
  JitterSpec jitter;
  RegularizationSpec regularization;
};

/// Capacity U[1500, 1700] veh/h, critical density U[0.023, 0.027], jitter
/// 20 veh/h and 1e-4 veh/m per 5 s frame, no regularization.
LearningSetup calibration_learning();

/// Capacity U[1440, 1560] veh/h, critical density 0.025, jitter 50 veh/h,
/// regularization on.
LearningSetup accident_learning();

/// Synthetic capacity-drop run: inside [drop_start, drop_end) the true
/// capacity is baseline * (1 - drop_fraction) and the downstream boundary is
/// congested.
struct AccidentOptions {
  FundamentalDiagram baseline = FundamentalDiagram::from_vph(1500.0, 0.025, 0.2);
  double drop_fraction = 0.66;
  double drop_start = 3600.0;
  double drop_end = 6000.0;
  RoadGrid grid{4, 211.25, 5.0, 60};
  NoiseSpec noise = NoiseSpec::from_sd(0.2e-2, 0.1e-2);
  std::vector<std::size_t> sensor_cells{1, 4};
  double horizon = 9000.0;
  double initial_density = 0.015;
  double inflow_density = 0.015;
  double free_outflow_density = 0.0;
  double congested_outflow_density = 0.15;
  std::uint64_t seed = 0;
};

ScenarioConfig accident_config(const AccidentOptions& options);
SyntheticScenario generate_accident_scenario(const AccidentOptions& options);

struct TruncatedNormalSpec {
  double mean = 0.0;
  double sd = 1.0;
  double lower = 0.0;
  double upper = 1.0;

  void validate() const;
  /// Analytic mean of the truncated distribution.
  double truncated_mean() const;
};

/// Rejection sampling from the parent normal. Throws std::runtime_error when
/// `max_attempts` consecutive draws fall outside [lower, upper].
double sample_truncated_normal(const TruncatedNormalSpec& spec, CounterRng& rng,
                               std::size_t max_attempts = 1'000'000);

/// Shock speeds (m/s) for `samples` independent (left, right) density pairs.
/// Pairs with equal densities are redrawn; after `max_redraws` consecutive
/// ties a std::runtime_error is thrown.
std::vector<double> mixture_experiment(const FundamentalDiagram& fd,
                                       const TruncatedNormalSpec& left,
                                       const TruncatedNormalSpec& right, std::size_t samples,
                                       std::uint64_t seed, std::size_t max_redraws = 1000);

class OccupancyRangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// (occupancy / 100) / effective_vehicle_length, veh/m.
double occupancy_to_density(double occupancy_pct, double effective_vehicle_length = 6.5);

}  // namespace lwr
