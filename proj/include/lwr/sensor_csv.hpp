#pragma once

// Loop-detector CSV ingestion and synthetic export.
//
// Schema (UTF-8, comma-delimited, header required):
//   timestamp,sensor_id,occupancy_pct,flow_vph,speed_mps
// `timestamp` is integer seconds or ISO-8601 (YYYY-MM-DDTHH:MM:SS[Z|+HH:MM]);
// `speed_mps` may be empty. Synthetic exports append one
// true_density_veh_per_m_<cell> column per cell; ingestion ignores them.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lwr/filter.hpp"
#include "lwr/scenarios.hpp"

namespace lwr {

struct SensorRecord {
  double timestamp = 0.0;  // s
  std::string sensor_id;
  double occupancy_pct = 0.0;
  double flow_vph = 0.0;
  std::optional<double> speed_mps;
};

/// Thrown for file-level problems. Messages carry the 1-based line number or
/// the offending timestamp.
class SensorCsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses "1400000000" or "2014-05-09T06:40:00Z" into seconds.
double parse_timestamp(const std::string& text);

/// How sensor ids map onto the grid.
struct SensorMapping {
  std::map<std::string, std::size_t> cell_sensors;  // sensor id -> 1-based cell
  std::string left_boundary_sensor;
  std::string right_boundary_sensor;
  double effective_vehicle_length = 6.5;  // m
  std::map<std::string, double> vehicle_length_overrides;
  RoadGrid grid;

  double vehicle_length(const std::string& sensor) const;
  ObservationModel observation_model() const;
};

struct IngestResult {
  std::vector<ObservationFrame> frames;
  ObservationModel observation;
  std::vector<std::string> warnings;  // skipped rows, incomplete frames
  std::vector<double> gaps;           // expected frame times with no frame
  std::size_t skipped_rows = 0;
};

/// Groups rows by timestamp into frames spaced by grid.observation_interval().
/// Malformed or out-of-range rows are skipped with a warning; an empty file,
/// decreasing timestamps, or a duplicate (timestamp, sensor) pair throw
/// SensorCsvError.
IngestResult ingest_sensor_csv(std::istream& in, const SensorMapping& mapping);
IngestResult ingest_sensor_csv(const std::filesystem::path& path, const SensorMapping& mapping);

/// Mapping that reads back a synthetic export of `scenario`.
SensorMapping export_mapping(const SyntheticScenario& scenario);

/// Writes the observations of `scenario` in the sensor schema plus truth
/// columns. Cell sensors are named "cell_<i>", boundaries "boundary_left" and
/// "boundary_right". Occupancy uses an effective length of 1 / jam density.
void write_sensor_csv(std::ostream& out, const SyntheticScenario& scenario);

}  // namespace lwr
