#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lwr {

/// One local maximum of a kernel density estimate and the sample mass of
/// its basin (the region between the neighbouring density minima).
struct KdeMode {
  double location = 0.0;
  double density = 0.0;
  double mass = 0.0;
  double lower = 0.0;  // basin bounds
  double upper = 0.0;
};

struct KdeReport {
  double bandwidth = 0.0;
  std::size_t sample_size = 0;
  std::vector<KdeMode> modes;
  std::vector<double> saddles;  // density at the cut between modes[i] and modes[i+1]

  /// Modes left after two merging passes. First, neighbours whose valley is
  /// shallower than `min_dip_z` standard errors of the estimate are joined
  /// (pointwise KDE variance f R(K) / (n h), R(K) = 1 / (2 sqrt(pi))). Then any
  /// basin holding less than `min_mass` is folded into the neighbour it is
  /// least separated from.
  std::vector<KdeMode> significant_modes(double min_mass, double min_dip_z = 2.0) const;
};

/// Silverman's rule of thumb, 0.9 * min(sd, IQR/1.34) * n^(-1/5).
double silverman_bandwidth(std::span<const double> sample);

/// Gaussian KDE evaluated on `grid_points` points spanning the sample
/// +/- 3 bandwidths. A sample with zero spread yields one mode of mass 1.
/// `bandwidth <= 0` selects Silverman's rule.
KdeReport kde_modes(std::span<const double> sample, double bandwidth = 0.0,
                    std::size_t grid_points = 512);

}  // namespace lwr
