#pragma once

// Internal quantities are SI: vehicles/meter, vehicles/second, meters, seconds.
// Vehicles/hour only appears at ingestion and output boundaries.

namespace lwr::units {

inline constexpr double seconds_per_hour = 3600.0;

constexpr double vph_to_vps(double vph) { return vph / seconds_per_hour; }
constexpr double vps_to_vph(double vps) { return vps * seconds_per_hour; }

}  // namespace lwr::units
