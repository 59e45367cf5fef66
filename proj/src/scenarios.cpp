#include "lwr/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "lwr/rng.hpp"
#include "lwr/units.hpp"

namespace lwr {

void ScenarioConfig::validate() const {
  grid.validate();
  // Zero observation noise is allowed here (noise-free synthetic data).
  if (!(noise.observation_variance >= 0.0) || !(noise.evolution_variance >= 0.0)) {
    throw std::invalid_argument("scenario: noise variances must be non-negative");
  }
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) {
    throw std::invalid_argument("scenario: horizon must be non-negative");
  }
  if (fd_schedule.points.empty() || left_boundary.points.empty() ||
      right_boundary.points.empty()) {
    throw std::invalid_argument("scenario: schedules must be non-empty");
  }
  ObservationModel check(sensor_cells, grid.cells);
  (void)check;
  for (const auto& [start, fd] : fd_schedule.points) {
    const auto report = check_cfl(fd, grid);
    if (!report.satisfied && cfl_policy == CflPolicy::strict) {
      std::ostringstream os;
      os.precision(9);
      os << "scenario: diagram scheduled at t=" << start << " s violates CFL (time step "
         << grid.time_step << " s > " << report.max_time_step << " s)";
      throw CflViolationError(os.str());
    }
    if (initial_density < 0.0 || initial_density > fd.jam_density()) {
      throw std::invalid_argument("scenario: initial density outside [0, jam density]");
    }
  }
  auto check_boundary = [&](const Schedule<double>& s, const char* side) {
    for (const auto& [start, value] : s.points) {
      const double jam = fd_schedule.at(start).jam_density();
      if (value < 0.0 || value > jam) {
        throw std::invalid_argument(std::string("scenario: ") + side +
                                    " boundary density outside [0, jam density]");
      }
    }
  };
  check_boundary(left_boundary, "left");
  check_boundary(right_boundary, "right");
}

SyntheticScenario simulate_scenario(const ScenarioConfig& config) {
  config.validate();
  SyntheticScenario out;
  out.config = config;
  out.observation = ObservationModel(config.sensor_cells, config.grid.cells);
  out.initial.density.assign(config.grid.cells, config.initial_density);
  out.initial.time = 0.0;

  const double interval = config.grid.observation_interval();
  const auto frames = static_cast<std::size_t>(std::floor(config.horizon / interval + 1e-9));
  const double sd = std::sqrt(config.noise.observation_variance);
  const std::size_t substeps = config.grid.substeps_per_observation;

  DensityState state = out.initial;
  for (std::size_t k = 0; k < frames; ++k) {
    ObservationFrame frame;
    frame.boundaries.left.resize(substeps);
    frame.boundaries.right.resize(substeps);
    const FundamentalDiagram* fd = nullptr;
    for (std::size_t s = 0; s < substeps; ++s) {
      const double t = state.time;
      fd = &config.fd_schedule.at(t);
      const double left = std::min(config.left_boundary.at(t), fd->jam_density());
      const double right = std::min(config.right_boundary.at(t), fd->jam_density());
      frame.boundaries.left[s] = left;
      frame.boundaries.right[s] = right;
      state = step(state, left, right, *fd, config.grid, config.cfl_policy, &out.stats);
    }
    // Pin the frame time to the grid to avoid drift from repeated addition.
    state.time = static_cast<double>(k + 1) * interval;
    frame.time = state.time;

    auto rng = make_rng(config.seed, {k, static_cast<std::uint64_t>(Stream::observation)});
    std::normal_distribution<double> normal;
    frame.values = out.observation.apply(state.density);
    for (auto& y : frame.values) {
      y = std::clamp(y + sd * normal(rng), 0.0, fd->jam_density());
    }
    out.truth.push_back(state);
    out.true_fd.push_back(*fd);
    out.frames.push_back(std::move(frame));
  }
  return out;
}

Schedule<FundamentalDiagram> CalibrationOptions::default_fd_schedule() {
  return {{0.0, FundamentalDiagram::from_vph(1600.0, 0.025, 0.2)},
          {400.0, FundamentalDiagram::from_vph(1700.0, 0.026, 0.2)},
          {1000.0, FundamentalDiagram::from_vph(1550.0, 0.0245, 0.2)}};
}

ScenarioConfig calibration_config(const CalibrationOptions& o) {
  ScenarioConfig c;
  c.grid.cells = o.cells;
  c.grid.cell_length = o.cells > 0 ? o.road_length / static_cast<double>(o.cells) : 0.0;
  c.grid.time_step = o.time_step;
  c.grid.substeps_per_observation = o.substeps_per_observation;
  c.fd_schedule = o.fd_schedule;
  c.left_boundary = {{0.0, o.inflow_density}, {o.inflow_end, 0.0}};
  c.right_boundary = {{0.0, o.outflow_free_density},
                      {o.congestion_start, o.congestion_density},
                      {o.congestion_end, 0.0}};
  c.noise = NoiseSpec::from_sd(o.observation_sd, o.evolution_sd);
  c.sensor_cells = o.sensor_cells;
  c.horizon = o.horizon;
  c.initial_density = o.initial_density;
  c.seed = o.seed;
  return c;
}

SyntheticScenario generate_calibration_scenario(const CalibrationOptions& options) {
  return simulate_scenario(calibration_config(options));
}

LearningSetup calibration_learning() {
  LearningSetup l;
  l.prior = {units::vph_to_vps(1500.0), units::vph_to_vps(1700.0), 0.023, 0.027, 0.2};
  l.jitter = {units::vph_to_vps(20.0), 1e-4, 0.0};
  return l;
}

LearningSetup accident_learning() {
  LearningSetup l;
  l.prior = {units::vph_to_vps(1440.0), units::vph_to_vps(1560.0), 0.025, 0.025, 0.2};
  l.jitter = {units::vph_to_vps(50.0), 0.0, 0.0};
  l.regularization.enabled = true;
  return l;
}

ScenarioConfig accident_config(const AccidentOptions& o) {
  if (!(o.drop_fraction >= 0.0 && o.drop_fraction < 1.0)) {
    throw std::invalid_argument("accident: drop fraction must lie in [0, 1)");
  }
  if (!(o.drop_start >= 0.0 && o.drop_start < o.drop_end && o.drop_end <= o.horizon)) {
    throw std::invalid_argument("accident: drop window must lie inside the horizon");
  }
  ScenarioConfig c;
  c.grid = o.grid;
  c.noise = o.noise;
  c.sensor_cells = o.sensor_cells;
  c.horizon = o.horizon;
  c.initial_density = o.initial_density;
  c.seed = o.seed;
  c.left_boundary = Schedule<double>(o.inflow_density);
  if (o.drop_fraction > 0.0) {
    const auto& b = o.baseline;
    const FundamentalDiagram reduced(b.capacity() * (1.0 - o.drop_fraction), b.critical_density(),
                                     b.jam_density());
    c.fd_schedule = {{0.0, b}, {o.drop_start, reduced}, {o.drop_end, b}};
    c.right_boundary = {{0.0, o.free_outflow_density},
                        {o.drop_start, o.congested_outflow_density},
                        {o.drop_end, o.free_outflow_density}};
  } else {
    c.fd_schedule = Schedule<FundamentalDiagram>(o.baseline);
    c.right_boundary = Schedule<double>(o.free_outflow_density);
  }
  return c;
}

SyntheticScenario generate_accident_scenario(const AccidentOptions& options) {
  return simulate_scenario(accident_config(options));
}

void TruncatedNormalSpec::validate() const {
  if (!(lower < upper)) {
    throw std::invalid_argument("truncated normal: lower bound must be below upper bound");
  }
  if (!(sd > 0.0)) {
    throw std::invalid_argument("truncated normal: sd must be positive");
  }
}

namespace {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

double TruncatedNormalSpec::truncated_mean() const {
  validate();
  const double a = (lower - mean) / sd;
  const double b = (upper - mean) / sd;
  return mean + sd * (normal_pdf(a) - normal_pdf(b)) / (normal_cdf(b) - normal_cdf(a));
}

double sample_truncated_normal(const TruncatedNormalSpec& spec, CounterRng& rng,
                               std::size_t max_attempts) {
  spec.validate();
  std::normal_distribution<double> normal(spec.mean, spec.sd);
  for (std::size_t i = 0; i < max_attempts; ++i) {
    const double x = normal(rng);
    if (x >= spec.lower && x <= spec.upper) return x;
  }
  throw std::runtime_error("truncated normal: rejection sampler exhausted its attempts");
}

std::vector<double> mixture_experiment(const FundamentalDiagram& fd,
                                       const TruncatedNormalSpec& left,
                                       const TruncatedNormalSpec& right, std::size_t samples,
                                       std::uint64_t seed, std::size_t max_redraws) {
  if (samples < 1) throw std::invalid_argument("mixture experiment: need at least one sample");
  left.validate();
  right.validate();
  std::vector<double> speeds;
  speeds.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    auto rng = make_rng(seed, {i, static_cast<std::uint64_t>(Stream::mixture)});
    std::size_t redraws = 0;
    for (;;) {
      const double rl = std::min(sample_truncated_normal(left, rng), fd.jam_density());
      const double rr = std::min(sample_truncated_normal(right, rng), fd.jam_density());
      if (rl != rr) {
        speeds.push_back(fd.shock_speed(rl, rr));
        break;
      }
      if (++redraws >= max_redraws) {
        throw std::runtime_error("mixture experiment: left and right densities keep coinciding");
      }
    }
  }
  return speeds;
}

double occupancy_to_density(double occupancy_pct, double effective_vehicle_length) {
  if (!(effective_vehicle_length > 0.0)) {
    throw std::invalid_argument("effective vehicle length must be positive");
  }
  if (!(occupancy_pct >= 0.0 && occupancy_pct <= 100.0)) {
    std::ostringstream os;
    os << "occupancy " << occupancy_pct << "% outside [0, 100]";
    throw OccupancyRangeError(os.str());
  }
  return occupancy_pct / 100.0 / effective_vehicle_length;
}

}  // namespace lwr
