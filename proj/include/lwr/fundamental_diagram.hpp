#pragma once

#include <stdexcept>
#include <string>

namespace lwr {

/// Raised when a density lies outside [0, jam density].
class DensityDomainError : public std::domain_error {
 public:
  explicit DensityDomainError(double density, double jam_density);
  double density() const noexcept { return density_; }

 private:
  double density_;
};

/// Raised when a shock speed is requested for two equal densities.
class UndefinedShockError : public std::invalid_argument {
 public:
  explicit UndefinedShockError(double density);
};

/// Triangular flow-density relation.
///
/// Values are stored in SI units: capacity in vehicles/second, densities in
/// vehicles/meter. The diagram is immutable once constructed.
class FundamentalDiagram {
 public:
  /// Throws std::invalid_argument unless capacity > 0 and
  /// 0 < critical_density < jam_density.
  FundamentalDiagram(double capacity, double critical_density, double jam_density);

  /// Convenience constructor taking capacity in vehicles/hour.
  static FundamentalDiagram from_vph(double capacity_vph, double critical_density,
                                     double jam_density);

  double capacity() const noexcept { return capacity_; }
  double capacity_vph() const noexcept;
  double critical_density() const noexcept { return critical_density_; }
  double jam_density() const noexcept { return jam_density_; }

  /// Flow at `density` (veh/s). Throws DensityDomainError outside [0, jam].
  double flow(double density) const;

  /// Slope of the free-flow branch, q_c / rho_c (m/s).
  double free_flow_speed() const noexcept;

  /// Magnitude of the congested-branch slope, q_c / (rho_jam - rho_c) (m/s).
  double backward_wave_speed() const noexcept;

  /// max(free_flow_speed, backward_wave_speed).
  double max_wave_speed() const noexcept;

  /// Rankine-Hugoniot speed of a discontinuity between `left` and `right`.
  /// Positive values propagate downstream.
  double shock_speed(double left, double right) const;

  /// Godunov interface flux for the Riemann problem (left, right).
  double godunov_flux(double left, double right) const;

  bool operator==(const FundamentalDiagram&) const = default;

 private:
  void check_density(double density) const;

  double capacity_;
  double critical_density_;
  double jam_density_;
};

}  // namespace lwr
