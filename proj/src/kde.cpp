#include "lwr/kde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "lwr/filter.hpp"

namespace lwr {

double silverman_bandwidth(std::span<const double> sample) {
  const auto n = static_cast<double>(sample.size());
  if (sample.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : sample) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : sample) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  std::vector<double> copy(sample.begin(), sample.end());
  const double iqr = empirical_quantile(copy, 0.75) - empirical_quantile(copy, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  return 0.9 * spread * std::pow(n, -0.2);
}

KdeReport kde_modes(std::span<const double> sample, double bandwidth, std::size_t grid_points) {
  if (sample.empty()) throw std::invalid_argument("kde: empty sample");
  if (grid_points < 3) throw std::invalid_argument("kde: need at least 3 grid points");
  KdeReport report;
  report.sample_size = sample.size();
  const auto [lo_it, hi_it] = std::minmax_element(sample.begin(), sample.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  report.bandwidth = bandwidth > 0.0 ? bandwidth : silverman_bandwidth(sample);
  if (!(report.bandwidth > 0.0) || hi == lo) {
    report.modes.push_back({lo, std::numeric_limits<double>::infinity(), 1.0, lo, hi});
    return report;
  }
  const double bw = report.bandwidth;
  const double start = lo - 3.0 * bw;
  const double stop = hi + 3.0 * bw;
  const double dx = (stop - start) / static_cast<double>(grid_points - 1);
  std::vector<double> x(grid_points), f(grid_points, 0.0);
  for (std::size_t g = 0; g < grid_points; ++g) x[g] = start + dx * static_cast<double>(g);

  const double norm = 1.0 / (static_cast<double>(sample.size()) * bw * std::sqrt(2.0 * std::numbers::pi));
  for (double s : sample) {
    // Kernel contributions beyond 8 bandwidths are below double precision noise.
    const auto g0 = static_cast<std::ptrdiff_t>(std::floor((s - 8.0 * bw - start) / dx));
    const auto g1 = static_cast<std::ptrdiff_t>(std::ceil((s + 8.0 * bw - start) / dx));
    for (auto g = std::max<std::ptrdiff_t>(0, g0);
         g <= std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(grid_points) - 1, g1); ++g) {
      const double z = (x[g] - s) / bw;
      f[g] += std::exp(-0.5 * z * z);
    }
  }
  for (auto& v : f) v *= norm;

  // Local maxima; a plateau counts once at its centre.
  std::vector<std::size_t> peaks;
  for (std::size_t g = 1; g + 1 < grid_points; ++g) {
    if (f[g] > f[g - 1]) {
      std::size_t e = g;
      while (e + 1 < grid_points && f[e + 1] == f[g]) ++e;
      if (e + 1 < grid_points && f[e + 1] < f[g]) peaks.push_back((g + e) / 2);
      g = e;
    }
  }
  if (peaks.empty()) {
    peaks.push_back(static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin()));
  }

  // Basin boundaries at the lowest point between consecutive peaks.
  std::vector<double> cuts;
  for (std::size_t p = 0; p + 1 < peaks.size(); ++p) {
    const auto first = f.begin() + static_cast<std::ptrdiff_t>(peaks[p]);
    const auto last = f.begin() + static_cast<std::ptrdiff_t>(peaks[p + 1]) + 1;
    const auto valley = std::min_element(first, last) - f.begin();
    cuts.push_back(x[static_cast<std::size_t>(valley)]);
  }
  std::vector<double> mass(peaks.size(), 0.0);
  for (double s : sample) {
    const auto b = std::upper_bound(cuts.begin(), cuts.end(), s) - cuts.begin();
    mass[static_cast<std::size_t>(b)] += 1.0;
  }
  for (std::size_t p = 0; p < peaks.size(); ++p) {
    KdeMode mode;
    mode.location = x[peaks[p]];
    mode.density = f[peaks[p]];
    mode.mass = mass[p] / static_cast<double>(sample.size());
    mode.lower = p == 0 ? start : cuts[p - 1];
    mode.upper = p + 1 == peaks.size() ? stop : cuts[p];
    report.modes.push_back(mode);
  }
  // Store saddle heights for merging: density at each cut.
  report.saddles.clear();
  for (double c : cuts) {
    const auto g = static_cast<std::size_t>(std::llround((c - start) / dx));
    report.saddles.push_back(f[std::min(g, grid_points - 1)]);
  }
  return report;
}

namespace {

// Joins modes[i] and modes[i + 1]; the higher peak keeps its location.
void merge_pair(std::vector<KdeMode>& modes, std::vector<double>& saddle, std::size_t i) {
  KdeMode merged = modes[modes[i].density >= modes[i + 1].density ? i : i + 1];
  merged.mass = modes[i].mass + modes[i + 1].mass;
  merged.lower = modes[i].lower;
  merged.upper = modes[i + 1].upper;
  modes[i] = merged;
  modes.erase(modes.begin() + static_cast<std::ptrdiff_t>(i) + 1);
  saddle.erase(saddle.begin() + static_cast<std::ptrdiff_t>(i));
}

}  // namespace

std::vector<KdeMode> KdeReport::significant_modes(double min_mass, double min_dip_z) const {
  std::vector<KdeMode> left = modes;
  std::vector<double> saddle = saddles;

  if (min_dip_z > 0.0 && sample_size > 0 && bandwidth > 0.0) {
    const double scale =
        1.0 / (2.0 * std::sqrt(std::numbers::pi) * static_cast<double>(sample_size) * bandwidth);
    while (left.size() > 1) {
      std::size_t worst = 0;
      double worst_z = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i + 1 < left.size(); ++i) {
        const double peak = std::min(left[i].density, left[i + 1].density);
        const double se = std::sqrt((peak + saddle[i]) * scale);
        const double z = se > 0.0 ? (peak - saddle[i]) / se : 0.0;
        if (z < worst_z) {
          worst_z = z;
          worst = i;
        }
      }
      if (worst_z >= min_dip_z) break;
      merge_pair(left, saddle, worst);
    }
  }

  while (left.size() > 1) {
    auto weakest = std::min_element(left.begin(), left.end(),
                                    [](const KdeMode& a, const KdeMode& b) { return a.mass < b.mass; });
    if (weakest->mass >= min_mass) break;
    const auto i = static_cast<std::size_t>(weakest - left.begin());
    // Merge across the higher saddle (the shallower valley).
    std::size_t pair;
    if (i == 0) {
      pair = 0;
    } else if (i + 1 == left.size()) {
      pair = i - 1;
    } else {
      pair = saddle[i - 1] >= saddle[i] ? i - 1 : i;
    }
    merge_pair(left, saddle, pair);
  }
  return left;
}

}  // namespace lwr
