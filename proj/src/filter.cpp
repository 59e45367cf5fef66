#include "lwr/filter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "lwr/parallel.hpp"

namespace lwr {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_normal_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(variance) + d * d / variance);
}

BoundarySeries clamp_boundaries(const BoundarySeries& boundaries, double jam,
                                StepStats* stats) {
  BoundarySeries out = boundaries;
  auto clamp_all = [&](std::vector<double>& values) {
    for (auto& v : values) {
      const double c = std::clamp(v, 0.0, jam);
      if (c != v && stats) ++stats->clamp_events;
      v = c;
    }
  };
  clamp_all(out.left);
  clamp_all(out.right);
  return out;
}

}  // namespace

void NoiseSpec::validate() const {
  if (!(observation_variance > 0.0) || !std::isfinite(observation_variance)) {
    throw std::invalid_argument("noise: observation variance must be positive");
  }
  if (!(evolution_variance >= 0.0) || !std::isfinite(evolution_variance)) {
    throw std::invalid_argument("noise: evolution variance must be non-negative");
  }
}

ObservationModel::ObservationModel(std::vector<std::size_t> cells, std::size_t total_cells)
    : cells_(std::move(cells)), total_cells_(total_cells) {
  for (std::size_t j = 0; j < cells_.size(); ++j) {
    if (cells_[j] < 1 || cells_[j] > total_cells_) {
      throw std::invalid_argument("observation model: sensor cell out of range 1..M");
    }
    if (j > 0 && cells_[j] <= cells_[j - 1]) {
      throw std::invalid_argument("observation model: sensor cells must be strictly increasing");
    }
  }
}

std::vector<double> ObservationModel::apply(std::span<const double> state) const {
  if (state.size() != total_cells_) {
    throw std::invalid_argument("observation model: state size mismatch");
  }
  std::vector<double> out(cells_.size());
  for (std::size_t j = 0; j < cells_.size(); ++j) out[j] = state[index(j)];
  return out;
}

void JitterSpec::validate() const {
  if (!(capacity >= 0.0) || !(critical_density >= 0.0) || !(jam_density >= 0.0)) {
    throw std::invalid_argument("jitter: half-widths must be non-negative");
  }
}

void RegularizationSpec::validate() const {
  if (enabled && !(speed_sd > 0.0)) {
    throw std::invalid_argument("regularization: speed sd must be positive");
  }
}

void ParameterPrior::validate() const {
  if (!(capacity_lo > 0.0) || capacity_hi < capacity_lo) {
    throw std::invalid_argument("prior: capacity bounds must satisfy 0 < lo <= hi");
  }
  if (!(critical_density_lo > 0.0) || critical_density_hi < critical_density_lo ||
      !(critical_density_hi < jam_density)) {
    throw std::invalid_argument(
        "prior: critical density bounds must satisfy 0 < lo <= hi < jam density");
  }
}

void FilterConfig::validate() const {
  grid.validate();
  noise.validate();
  jitter.validate();
  regularization.validate();
  if (observation.state_size() != grid.cells) {
    throw std::invalid_argument("filter: observation model does not match grid size");
  }
  if (!(credible_mass > 0.0 && credible_mass < 1.0)) {
    throw std::invalid_argument("filter: credible mass must lie in (0, 1)");
  }
  if (!evolution) {
    throw std::invalid_argument("filter: evolution map is empty");
  }
}

EvolutionMap godunov_evolution() {
  return [](const Particle& p, const BoundarySeries& boundaries, const RoadGrid& grid,
            CflPolicy policy, StepStats* stats) {
    const auto bounded = clamp_boundaries(boundaries, p.fd.jam_density(), stats);
    return evolve(p.state, bounded, p.fd, grid, grid.substeps_per_observation, policy, stats);
  };
}

EvolutionMap identity_evolution() {
  return [](const Particle& p, const BoundarySeries&, const RoadGrid& grid, CflPolicy,
            StepStats*) {
    DensityState next = p.state;
    next.time += grid.observation_interval();
    return next;
  };
}

Forecast forecast(const Particle& particle, const BoundarySeries& boundaries, const RoadGrid& grid,
                  const NoiseSpec& noise, const EvolutionMap& evolution, CflPolicy policy,
                  StepStats* stats) {
  auto next = evolution(particle, boundaries, grid, policy, stats);
  return {std::move(next.density), noise.evolution_variance};
}

PredictiveLikelihood predictive_loglik(const Forecast& forecast, std::span<const double> y,
                                       const ObservationModel& model, const NoiseSpec& noise) {
  if (y.size() != model.size()) {
    throw std::invalid_argument("predictive likelihood: observation length mismatch");
  }
  if (model.size() == 0) return {0.0, true};
  const double variance = forecast.variance + noise.observation_variance;
  double total = 0.0;
  for (std::size_t j = 0; j < model.size(); ++j) {
    total += log_normal_pdf(y[j], forecast.mean.at(model.index(j)), variance);
  }
  return {total, false};
}

PredictiveLikelihood predictive_loglik(const Particle& particle, const ObservationFrame& frame,
                                       const ObservationModel& model, const NoiseSpec& noise,
                                       const RoadGrid& grid) {
  const auto f = forecast(particle, frame.boundaries, grid, noise);
  return predictive_loglik(f, frame.values, model, noise);
}

ConditionalPosterior conditional_posterior(const Forecast& forecast, std::span<const double> y,
                                           const ObservationModel& model, const NoiseSpec& noise) {
  if (y.size() != model.size()) {
    throw std::invalid_argument("conditional posterior: observation length mismatch");
  }
  const double w = forecast.variance;
  const double v = noise.observation_variance;
  ConditionalPosterior post;
  post.mean = forecast.mean;
  post.variance.assign(forecast.mean.size(), w);
  post.gain.resize(model.size());
  post.innovation_variance.assign(model.size(), v + w);
  const double gain = w / (v + w);
  for (std::size_t j = 0; j < model.size(); ++j) {
    const std::size_t i = model.index(j);
    post.gain[j] = gain;
    post.mean[i] = forecast.mean[i] + gain * (y[j] - forecast.mean[i]);
    post.variance[i] = w * (1.0 - gain);
  }
  return post;
}

DensityState sample_posterior(const ConditionalPosterior& posterior, double jam_density,
                              double time, CounterRng& rng, StepStats* stats) {
  std::normal_distribution<double> normal;
  DensityState out;
  out.time = time;
  out.density.resize(posterior.mean.size());
  for (std::size_t i = 0; i < posterior.mean.size(); ++i) {
    double value = posterior.mean[i];
    if (posterior.variance[i] > 0.0) value += std::sqrt(posterior.variance[i]) * normal(rng);
    const double clamped = std::clamp(value, 0.0, jam_density);
    if (clamped != value && stats) ++stats->clamp_events;
    out.density[i] = clamped;
  }
  return out;
}

DensityState propagate(const Particle& particle, const ObservationFrame& frame,
                       const ObservationModel& model, const NoiseSpec& noise,
                       const RoadGrid& grid, CounterRng& rng, StepStats* stats) {
  const auto f = forecast(particle, frame.boundaries, grid, noise, godunov_evolution(),
                          CflPolicy::warn, stats);
  const auto post = conditional_posterior(f, frame.values, model, noise);
  return sample_posterior(post, particle.fd.jam_density(), frame.time, rng, stats);
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights, bool* degenerate) {
  const std::size_t n = log_weights.size();
  std::vector<double> weights(n, n ? 1.0 / static_cast<double>(n) : 0.0);
  double top = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) {
    if (!std::isnan(lw)) top = std::max(top, lw);
  }
  bool collapsed = !std::isfinite(top);
  if (!collapsed) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double lw = log_weights[i];
      weights[i] = std::isnan(lw) ? 0.0 : std::exp(lw - top);
      total += weights[i];
    }
    for (auto& w : weights) w /= total;
  } else {
    std::fill(weights.begin(), weights.end(), n ? 1.0 / static_cast<double>(n) : 0.0);
  }
  if (degenerate) *degenerate = collapsed;
  return weights;
}

namespace {

std::vector<double> cumulative(std::span<const double> weights) {
  std::vector<double> cdf(weights.size());
  double running = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    running += weights[i];
    cdf[i] = running;
  }
  return cdf;
}

std::size_t locate(const std::vector<double>& cdf, double u) {
  // Scale by the total so rounding in the running sum cannot push u past the end.
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u * cdf.back());
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

}  // namespace

std::vector<std::size_t> resample_multinomial(std::span<const double> weights, std::size_t count,
                                              CounterRng& rng) {
  if (weights.empty()) throw std::invalid_argument("resample: empty weight vector");
  const auto cdf = cumulative(weights);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<std::size_t> out(count);
  for (auto& index : out) index = locate(cdf, uniform(rng));
  return out;
}

std::vector<std::size_t> resample_systematic(std::span<const double> weights, std::size_t count,
                                             CounterRng& rng) {
  if (weights.empty()) throw std::invalid_argument("resample: empty weight vector");
  const auto cdf = cumulative(weights);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double offset = uniform(rng);
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = locate(cdf, (static_cast<double>(i) + offset) / static_cast<double>(count));
  }
  return out;
}

double reflect_into(double value, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("reflect_into: empty interval");
  const double width = hi - lo;
  // Fold onto a period of 2*width, then mirror the upper half.
  double offset = std::fmod(value - lo, 2.0 * width);
  if (offset < 0.0) offset += 2.0 * width;
  if (offset > width) offset = 2.0 * width - offset;
  double out = lo + offset;
  // Boundary points are infeasible for an open interval; nudge inward.
  if (out <= lo) out = std::nextafter(lo, hi);
  if (out >= hi) out = std::nextafter(hi, lo);
  return out;
}

FundamentalDiagram jitter_parameters(const FundamentalDiagram& fd, const JitterSpec& jitter,
                                     CounterRng& rng) {
  auto perturb = [&rng](double value, double eps) {
    if (eps <= 0.0) return value;
    std::uniform_real_distribution<double> uniform(-eps, eps);
    return value + uniform(rng);
  };
  double jam = perturb(fd.jam_density(), jitter.jam_density);
  if (jam <= 0.0) jam = jam < 0.0 ? -jam : fd.jam_density();
  double rho_c = perturb(fd.critical_density(), jitter.critical_density);
  if (!(rho_c > 0.0 && rho_c < jam)) rho_c = reflect_into(rho_c, 0.0, jam);
  double capacity = perturb(fd.capacity(), jitter.capacity);
  if (capacity <= 0.0) capacity = capacity < 0.0 ? -capacity : fd.capacity();
  return {capacity, rho_c, jam};
}

StepResult pf_step(const Ensemble& particles, const ObservationFrame& frame,
                   const FilterConfig& config, std::uint64_t frame_index) {
  const std::size_t n = particles.size();
  if (n == 0) throw std::invalid_argument("pf_step: ensemble is empty");
  const auto& model = config.observation;
  if (frame.values.size() != model.size()) {
    throw std::invalid_argument("pf_step: observation length does not match sensor count");
  }

  std::vector<Forecast> forecasts(n);
  std::vector<double> loglik(n);
  std::vector<double> log_weights(n);
  std::vector<StepStats> stats(n);
  bool uninformative = false;

  detail::parallel_for(n, config.threads, [&](std::size_t i) {
    const auto& p = particles[i];
    forecasts[i] = forecast(p, frame.boundaries, config.grid, config.noise, config.evolution,
                            config.cfl_policy, &stats[i]);
    const auto pl = predictive_loglik(forecasts[i], frame.values, model, config.noise);
    loglik[i] = pl.log_density;
    double lw = pl.log_density;
    if (config.regularization.enabled) {
      const auto& reg = config.regularization;
      lw += log_normal_pdf(p.fd.free_flow_speed(), reg.free_flow_speed,
                           reg.speed_sd * reg.speed_sd);
    }
    log_weights[i] = lw;
  });
  uninformative = model.size() == 0;

  StepResult result;
  result.uninformative = uninformative;
  result.weights = normalize_log_weights(log_weights, &result.degenerate);

  {
    double top = -std::numeric_limits<double>::infinity();
    for (double l : loglik) top = std::max(top, l);
    if (std::isfinite(top)) {
      double acc = 0.0;
      for (double l : loglik) acc += std::exp(l - top);
      result.log_evidence = top + std::log(acc / static_cast<double>(n));
    } else {
      result.log_evidence = top;
    }
  }

  auto resample_rng = make_rng(config.seed, {frame_index, static_cast<std::uint64_t>(Stream::resample)});
  result.ancestors = config.resampling == ResamplingScheme::systematic
                         ? resample_systematic(result.weights, n, resample_rng)
                         : resample_multinomial(result.weights, n, resample_rng);

  result.particles.resize(n, particles.front());
  detail::parallel_for(n, config.threads, [&](std::size_t i) {
    const std::size_t a = result.ancestors[i];
    const auto post = conditional_posterior(forecasts[a], frame.values, model, config.noise);
    auto jitter_rng =
        make_rng(config.seed, {frame_index, i, static_cast<std::uint64_t>(Stream::jitter)});
    const auto fd = jitter_parameters(particles[a].fd, config.jitter, jitter_rng);
    auto prop_rng =
        make_rng(config.seed, {frame_index, i, static_cast<std::uint64_t>(Stream::propagate)});
    StepStats local;
    auto state = sample_posterior(post, particles[a].fd.jam_density(), frame.time, prop_rng, &local);
    // A replenished jam density may sit below sampled values.
    for (auto& d : state.density) {
      if (d > fd.jam_density()) {
        d = fd.jam_density();
        ++local.clamp_events;
      }
    }
    result.particles[i] = Particle{std::move(state), fd};
    stats[i] += local;
  });

  for (const auto& s : stats) result.stats += s;
  return result;
}

double empirical_quantile(std::vector<double> sample, double probability) {
  if (sample.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(sample.begin(), sample.end());
  const double pos = probability * static_cast<double>(sample.size() - 1);
  const auto lower = static_cast<std::size_t>(std::floor(pos));
  const std::size_t upper = std::min(lower + 1, sample.size() - 1);
  const double frac = pos - static_cast<double>(lower);
  return sample[lower] + frac * (sample[upper] - sample[lower]);
}

namespace {

Interval interval_of(const std::vector<double>& sample, double credible_mass) {
  double mean = 0.0;
  for (double x : sample) mean += x;
  mean /= static_cast<double>(sample.size());
  const double tail = 0.5 * (1.0 - credible_mass);
  Interval out{mean, empirical_quantile(sample, tail), empirical_quantile(sample, 1.0 - tail)};
  // Guard the ordering invariant against rounding in the mean.
  out.lo = std::min(out.lo, out.mean);
  out.hi = std::max(out.hi, out.mean);
  return out;
}

}  // namespace

PosteriorSummary summarize(const Ensemble& particles, double time, double credible_mass) {
  if (particles.empty()) throw std::invalid_argument("summarize: empty ensemble");
  PosteriorSummary s;
  s.time = time;
  const std::size_t n = particles.size();
  const std::size_t m = particles.front().state.size();
  std::vector<double> column(n);
  s.density.resize(m);
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t i = 0; i < n; ++i) column[i] = particles[i].state.density[c];
    s.density[c] = interval_of(column, credible_mass);
  }
  for (std::size_t i = 0; i < n; ++i) column[i] = particles[i].fd.capacity();
  s.capacity = interval_of(column, credible_mass);
  for (std::size_t i = 0; i < n; ++i) column[i] = particles[i].fd.critical_density();
  s.critical_density = interval_of(column, credible_mass);
  for (std::size_t i = 0; i < n; ++i) column[i] = particles[i].fd.jam_density();
  s.jam_density = interval_of(column, credible_mass);
  return s;
}

FilterRun run_filter(Ensemble initial, std::span<const ObservationFrame> frames,
                     const FilterConfig& config, const EnsembleObserver& observer) {
  config.validate();
  if (initial.empty()) throw std::invalid_argument("run_filter: ensemble is empty");
  const double interval = config.grid.observation_interval();
  const double tolerance = 1e-9 * interval;
  auto describe = [](std::size_t k, double t) {
    std::ostringstream os;
    os.precision(9);
    os << "frame " << k << " (t=" << t << " s)";
    return os.str();
  };
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto& f = frames[k];
    if (f.values.size() != config.observation.size()) {
      throw IngestionError(describe(k, f.time) + ": expected " +
                           std::to_string(config.observation.size()) + " readings");
    }
    if (f.boundaries.size() < config.grid.substeps_per_observation) {
      throw IngestionError(describe(k, f.time) + ": boundary data does not cover the interval");
    }
    if (k > 0) {
      const double dt = f.time - frames[k - 1].time;
      if (dt <= 0.0) throw IngestionError(describe(k, f.time) + ": out of order");
      if (std::abs(dt - interval) > tolerance) {
        throw IngestionError(describe(k, f.time) + ": gap after previous frame");
      }
    }
  }

  FilterRun run;
  run.summaries.reserve(frames.size());
  Ensemble current = std::move(initial);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    auto step = pf_step(current, frames[k], config, k);
    current = std::move(step.particles);
    auto summary = summarize(current, frames[k].time, config.credible_mass);
    summary.log_evidence = step.log_evidence;
    summary.degenerate = step.degenerate;
    summary.uninformative = step.uninformative;
    run.summaries.push_back(std::move(summary));
    run.frame_log_evidence.push_back(step.log_evidence);
    run.log_evidence += step.log_evidence;
    if (step.degenerate) ++run.degenerate_frames;
    run.stats += step.stats;
    if (observer) observer(k, current);
  }
  return run;
}

Ensemble initial_ensemble(std::size_t count, const DensityState& initial,
                          const ParameterPrior& prior, const NoiseSpec& noise,
                          std::uint64_t seed) {
  if (count == 0) throw std::invalid_argument("initial ensemble: particle count must be >= 1");
  prior.validate();
  Ensemble out;
  out.reserve(count);
  const double sd = std::sqrt(noise.evolution_variance);
  for (std::size_t i = 0; i < count; ++i) {
    auto rng = make_rng(seed, {i, static_cast<std::uint64_t>(Stream::initial)});
    auto draw = [&rng](double lo, double hi) {
      if (lo == hi) return lo;
      std::uniform_real_distribution<double> u(lo, hi);
      return u(rng);
    };
    const double capacity = draw(prior.capacity_lo, prior.capacity_hi);
    const double rho_c = draw(prior.critical_density_lo, prior.critical_density_hi);
    FundamentalDiagram fd(capacity, rho_c, prior.jam_density);
    DensityState state = initial;
    std::normal_distribution<double> normal;
    for (auto& d : state.density) {
      if (sd > 0.0) d += sd * normal(rng);
      d = std::clamp(d, 0.0, prior.jam_density);
    }
    out.push_back(Particle{std::move(state), fd});
  }
  return out;
}

}  // namespace lwr
