#pragma once

// Fully adapted particle filter with static-parameter replenishment for the
// LWR state-space model:
//
//   y_{t+1}     = H theta_{t+1} + eps_v,   eps_v ~ N(0, v I_k)
//   theta_{t+1} = f_phi(theta_t) + eps_w,  eps_w ~ N(0, w I_M)
//
// where f_phi is the Godunov evolution over one observation interval and
// phi = (q_c, rho_c, rho_jam) are the fundamental-diagram parameters.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "lwr/fundamental_diagram.hpp"
#include "lwr/godunov.hpp"
#include "lwr/rng.hpp"

namespace lwr {

/// Observation variance v and evolution variance w, both in (veh/m)^2.
struct NoiseSpec {
  double observation_variance = 1.0;
  double evolution_variance = 0.0;

  static NoiseSpec from_sd(double observation_sd, double evolution_sd) {
    return {observation_sd * observation_sd, evolution_sd * evolution_sd};
  }
  void validate() const;
};

/// Row-selection operator H: picks the measured cells out of the state.
class ObservationModel {
 public:
  ObservationModel() = default;
  /// `cells` are 1-based, strictly increasing and at most `total_cells`.
  ObservationModel(std::vector<std::size_t> cells, std::size_t total_cells);

  std::size_t size() const noexcept { return cells_.size(); }
  std::size_t state_size() const noexcept { return total_cells_; }
  /// 1-based cell numbers as configured.
  const std::vector<std::size_t>& cells() const noexcept { return cells_; }
  /// 0-based state index of sensor j.
  std::size_t index(std::size_t j) const { return cells_.at(j) - 1; }

  std::vector<double> apply(std::span<const double> state) const;

 private:
  std::vector<std::size_t> cells_;
  std::size_t total_cells_ = 0;
};

/// Measured densities at `time` together with the boundary densities that
/// drive the solver over the interval ending at `time`.
struct ObservationFrame {
  double time = 0.0;
  std::vector<double> values;
  BoundarySeries boundaries;
};

struct Particle {
  DensityState state;
  FundamentalDiagram fd;
};

using Ensemble = std::vector<Particle>;

/// Half-widths of the uniform replenishment kernel, SI units. Zero disables
/// learning of that parameter.
struct JitterSpec {
  double capacity = 0.0;          // veh/s
  double critical_density = 0.0;  // veh/m
  double jam_density = 0.0;       // veh/m

  void validate() const;
};

/// Multiplies particle weights by N(q_c/rho_c; free_flow_speed, speed_sd).
struct RegularizationSpec {
  bool enabled = false;
  double free_flow_speed = 17.0;  // m/s
  double speed_sd = 5.0;          // m/s

  void validate() const;
};

enum class ResamplingScheme { multinomial, systematic };

/// Deterministic map theta_t -> f_phi(theta_t) over one observation interval.
using EvolutionMap = std::function<DensityState(const Particle&, const BoundarySeries&,
                                                const RoadGrid&, CflPolicy, StepStats*)>;

/// Godunov evolution over grid.substeps_per_observation steps. Boundary
/// densities above the particle's jam density are clamped (and counted).
EvolutionMap godunov_evolution();

/// Test hook: f_phi(theta) = theta.
EvolutionMap identity_evolution();

/// mu_f = f_phi(theta_t); C_f = variance * I.
struct Forecast {
  std::vector<double> mean;
  double variance = 0.0;
};

Forecast forecast(const Particle& particle, const BoundarySeries& boundaries, const RoadGrid& grid,
                  const NoiseSpec& noise, const EvolutionMap& evolution = godunov_evolution(),
                  CflPolicy policy = CflPolicy::warn, StepStats* stats = nullptr);

struct PredictiveLikelihood {
  double log_density = 0.0;
  bool uninformative = false;  // no sensors in the frame
};

/// log N(y; H mu_f, H C_f H^T + V).
PredictiveLikelihood predictive_loglik(const Forecast& forecast, std::span<const double> y,
                                       const ObservationModel& model, const NoiseSpec& noise);

PredictiveLikelihood predictive_loglik(const Particle& particle, const ObservationFrame& frame,
                                       const ObservationModel& model, const NoiseSpec& noise,
                                       const RoadGrid& grid);

/// Kalman measurement update of a forecast. With diagonal V and W the gain
/// matrix K has one nonzero entry per sensor, K(index(j), j) = gain[j].
struct ConditionalPosterior {
  std::vector<double> mean;
  std::vector<double> variance;  // diagonal of C_{t+1}
  std::vector<double> gain;      // per sensor
  std::vector<double> innovation_variance;  // diagonal of H C_f H^T + V
};

ConditionalPosterior conditional_posterior(const Forecast& forecast, std::span<const double> y,
                                           const ObservationModel& model, const NoiseSpec& noise);

/// Draws from N(mean, diag(variance)), clamped to [0, jam_density].
DensityState sample_posterior(const ConditionalPosterior& posterior, double jam_density,
                              double time, CounterRng& rng, StepStats* stats = nullptr);

/// Draws theta_{t+1} ~ p(theta_{t+1} | theta_t, phi, y_{t+1}).
DensityState propagate(const Particle& particle, const ObservationFrame& frame,
                       const ObservationModel& model, const NoiseSpec& noise,
                       const RoadGrid& grid, CounterRng& rng, StepStats* stats = nullptr);

/// Normalizes log-weights with max subtraction. If every weight is zero the
/// result is uniform and `degenerate` is set.
std::vector<double> normalize_log_weights(std::span<const double> log_weights,
                                          bool* degenerate = nullptr);

std::vector<std::size_t> resample_multinomial(std::span<const double> weights, std::size_t count,
                                              CounterRng& rng);
std::vector<std::size_t> resample_systematic(std::span<const double> weights, std::size_t count,
                                             CounterRng& rng);

/// Reflects `value` back into the open interval (lo, hi).
double reflect_into(double value, double lo, double hi);

/// Adds Uniform(-eps, eps) to each parameter and reflects back into
/// {q_c > 0, 0 < rho_c < rho_jam}.
FundamentalDiagram jitter_parameters(const FundamentalDiagram& fd, const JitterSpec& jitter,
                                     CounterRng& rng);

struct FilterConfig {
  RoadGrid grid;
  ObservationModel observation;
  NoiseSpec noise;
  JitterSpec jitter;
  RegularizationSpec regularization;
  ResamplingScheme resampling = ResamplingScheme::multinomial;
  CflPolicy cfl_policy = CflPolicy::warn;
  std::size_t threads = 1;
  std::uint64_t seed = 0;
  double credible_mass = 0.95;
  EvolutionMap evolution = godunov_evolution();

  void validate() const;
};

struct StepResult {
  Ensemble particles;
  double log_evidence = 0.0;       // log((1/N) sum_i p(y | particle_i))
  std::vector<double> weights;     // normalized resampling weights
  std::vector<std::size_t> ancestors;
  bool degenerate = false;
  bool uninformative = false;
  StepStats stats;
};

/// Resample on the predictive likelihood, propagate from the conditional
/// posterior, replenish the parameters. Randomness is keyed on
/// (config.seed, frame_index, particle index) so results do not depend on
/// config.threads.
StepResult pf_step(const Ensemble& particles, const ObservationFrame& frame,
                   const FilterConfig& config, std::uint64_t frame_index);

struct Interval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

struct PosteriorSummary {
  double time = 0.0;
  std::vector<Interval> density;
  Interval capacity;  // veh/s
  Interval critical_density;
  Interval jam_density;
  double log_evidence = 0.0;
  bool degenerate = false;
  bool uninformative = false;
};

/// Linear-interpolation empirical quantile of an unsorted sample.
double empirical_quantile(std::vector<double> sample, double probability);

PosteriorSummary summarize(const Ensemble& particles, double time, double credible_mass);

class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FilterRun {
  std::vector<PosteriorSummary> summaries;
  double log_evidence = 0.0;
  std::vector<double> frame_log_evidence;
  std::size_t degenerate_frames = 0;
  StepStats stats;
};

/// Called with the post-step ensemble of every frame.
using EnsembleObserver = std::function<void(std::size_t frame, const Ensemble&)>;

/// Throws IngestionError on out-of-order frames, gaps, or malformed frames.
FilterRun run_filter(Ensemble initial, std::span<const ObservationFrame> frames,
                     const FilterConfig& config, const EnsembleObserver& observer = {});

/// Bounds of the parameter prior; lo == hi gives a point mass.
struct ParameterPrior {
  double capacity_lo = 0.0;  // veh/s
  double capacity_hi = 0.0;
  double critical_density_lo = 0.0;
  double critical_density_hi = 0.0;
  double jam_density = 0.0;

  void validate() const;
};

/// theta_0 = initial + N(0, w I) (clamped), phi from uniform priors.
Ensemble initial_ensemble(std::size_t count, const DensityState& initial,
                          const ParameterPrior& prior, const NoiseSpec& noise,
                          std::uint64_t seed);

/// log B_t = log B_{t-1} + log p(y_t | M1) - log p(y_t | M0).
constexpr double bayes_factor_update(double log_bayes_factor, double log_evidence_m1,
                                     double log_evidence_m0) {
  return log_bayes_factor + (log_evidence_m1 - log_evidence_m0);
}

}  // namespace lwr
