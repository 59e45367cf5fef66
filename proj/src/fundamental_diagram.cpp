#include "lwr/fundamental_diagram.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lwr/units.hpp"

namespace lwr {

namespace {

std::string describe_density(double density, double jam_density) {
  std::ostringstream os;
  os.precision(9);
  os << "density " << density << " veh/m outside [0, " << jam_density << "]";
  return os.str();
}

std::string describe_shock(double density) {
  std::ostringstream os;
  os.precision(9);
  os << "shock speed undefined for equal densities (" << density << " veh/m)";
  return os.str();
}

}  // namespace

DensityDomainError::DensityDomainError(double density, double jam_density)
    : std::domain_error(describe_density(density, jam_density)), density_(density) {}

UndefinedShockError::UndefinedShockError(double density)
    : std::invalid_argument(describe_shock(density)) {}

FundamentalDiagram::FundamentalDiagram(double capacity, double critical_density,
                                       double jam_density)
    : capacity_(capacity), critical_density_(critical_density), jam_density_(jam_density) {
  if (!(capacity > 0.0) || !std::isfinite(capacity)) {
    throw std::invalid_argument("fundamental diagram: capacity must be positive");
  }
  if (!(critical_density > 0.0) || !(critical_density < jam_density) ||
      !std::isfinite(jam_density)) {
    throw std::invalid_argument(
        "fundamental diagram: require 0 < critical density < jam density");
  }
}

FundamentalDiagram FundamentalDiagram::from_vph(double capacity_vph, double critical_density,
                                                double jam_density) {
  return {units::vph_to_vps(capacity_vph), critical_density, jam_density};
}

double FundamentalDiagram::capacity_vph() const noexcept {
  return units::vps_to_vph(capacity_);
}

void FundamentalDiagram::check_density(double density) const {
  if (!(density >= 0.0 && density <= jam_density_)) {
    throw DensityDomainError(density, jam_density_);
  }
}

double FundamentalDiagram::flow(double density) const {
  check_density(density);
  if (density < critical_density_) {
    return capacity_ / critical_density_ * density;
  }
  return capacity_ * (jam_density_ - density) / (jam_density_ - critical_density_);
}

double FundamentalDiagram::free_flow_speed() const noexcept {
  return capacity_ / critical_density_;
}

double FundamentalDiagram::backward_wave_speed() const noexcept {
  return capacity_ / (jam_density_ - critical_density_);
}

double FundamentalDiagram::max_wave_speed() const noexcept {
  return std::max(free_flow_speed(), backward_wave_speed());
}

double FundamentalDiagram::shock_speed(double left, double right) const {
  check_density(left);
  check_density(right);
  if (left == right) {
    throw UndefinedShockError(left);
  }
  return (flow(left) - flow(right)) / (left - right);
}

double FundamentalDiagram::godunov_flux(double left, double right) const {
  check_density(left);
  check_density(right);
  const double rc = critical_density_;
  // Cases are checked top to bottom; neighbouring branches agree on shared
  // boundaries.
  if (right < left && left <= rc) {
    return flow(left);
  }
  if (right <= rc && rc <= left) {
    return capacity_;
  }
  if (rc <= right && right < left) {
    return flow(right);
  }
  if (left < right) {
    return std::min(flow(left), flow(right));
  }
  // left == right away from the critical density
  return flow(left);
}

}  // namespace lwr
