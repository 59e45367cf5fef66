#include "lwr/sensor_csv.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "lwr/format.hpp"
#include "lwr/units.hpp"
#include "lwr/scenarios.hpp"

namespace lwr {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return value;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

double parse_timestamp(const std::string& raw) {
  const std::string text = trim(raw);
  long long seconds = 0;
  if (parse_int(text, seconds)) return static_cast<double>(seconds);

  // YYYY-MM-DD[T ]HH:MM:SS[Z|(+|-)HH:MM]
  auto fail = [&]() -> double { throw std::invalid_argument("bad timestamp '" + text + "'"); };
  if (text.size() < 19 || text[4] != '-' || text[7] != '-' ||
      (text[10] != 'T' && text[10] != ' ') || text[13] != ':' || text[16] != ':') {
    return fail();
  }
  int year = 0;
  unsigned month = 0, day = 0, hour = 0, minute = 0, second = 0;
  std::string_view v(text);
  if (!parse_int(v.substr(0, 4), year) || !parse_int(v.substr(5, 2), month) ||
      !parse_int(v.substr(8, 2), day) || !parse_int(v.substr(11, 2), hour) ||
      !parse_int(v.substr(14, 2), minute) || !parse_int(v.substr(17, 2), second)) {
    return fail();
  }
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                           std::chrono::day{day}};
  if (!ymd.ok() || hour > 23 || minute > 59 || second > 60) return fail();
  long long offset = 0;
  const auto zone = v.substr(19);
  if (!zone.empty() && zone != "Z") {
    unsigned oh = 0, om = 0;
    if (zone.size() != 6 || (zone[0] != '+' && zone[0] != '-') || zone[3] != ':' ||
        !parse_int(zone.substr(1, 2), oh) || !parse_int(zone.substr(4, 2), om)) {
      return fail();
    }
    offset = (zone[0] == '+' ? 1 : -1) * static_cast<long long>(oh * 3600 + om * 60);
  }
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<double>(days * 86400LL + hour * 3600LL + minute * 60LL + second - offset);
}

double SensorMapping::vehicle_length(const std::string& sensor) const {
  const auto it = vehicle_length_overrides.find(sensor);
  return it == vehicle_length_overrides.end() ? effective_vehicle_length : it->second;
}

ObservationModel SensorMapping::observation_model() const {
  std::vector<std::size_t> cells;
  for (const auto& [id, cell] : cell_sensors) cells.push_back(cell);
  std::sort(cells.begin(), cells.end());
  return ObservationModel(cells, grid.cells);
}

IngestResult ingest_sensor_csv(std::istream& in, const SensorMapping& mapping) {
  mapping.grid.validate();
  IngestResult result;
  result.observation = mapping.observation_model();

  std::string line;
  if (!std::getline(in, line)) throw SensorCsvError("sensor csv: empty file");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = split(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
  for (const char* name : {"timestamp", "sensor_id", "occupancy_pct", "flow_vph", "speed_mps"}) {
    if (!column.count(name)) {
      throw SensorCsvError(std::string("sensor csv: header lacks column '") + name + "'");
    }
  }

  // timestamp -> sensor -> density
  std::map<double, std::map<std::string, double>> readings;
  std::size_t line_no = 1;
  std::size_t data_rows = 0;
  double last_time = -std::numeric_limits<double>::infinity();
  auto skip = [&](const std::string& why) {
    ++result.skipped_rows;
    result.warnings.push_back("line " + std::to_string(line_no) + ": " + why + " (row skipped)");
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++data_rows;
    const auto fields = split(line);
    if (fields.size() < header.size()) {
      skip("expected " + std::to_string(header.size()) + " fields");
      continue;
    }
    SensorRecord rec;
    try {
      rec.timestamp = parse_timestamp(fields[column["timestamp"]]);
    } catch (const std::invalid_argument& e) {
      skip(e.what());
      continue;
    }
    rec.sensor_id = fields[column["sensor_id"]];
    const auto occ = parse_double(fields[column["occupancy_pct"]]);
    const auto flow = parse_double(fields[column["flow_vph"]]);
    const auto& speed_text = fields[column["speed_mps"]];
    rec.speed_mps = parse_double(speed_text);
    if (rec.sensor_id.empty() || !occ || !flow || (!speed_text.empty() && !rec.speed_mps)) {
      skip("malformed field");
      continue;
    }
    rec.occupancy_pct = *occ;
    rec.flow_vph = *flow;
    if (rec.flow_vph < 0.0) {
      skip("negative flow");
      continue;
    }
    double density = 0.0;
    try {
      density = occupancy_to_density(rec.occupancy_pct, mapping.vehicle_length(rec.sensor_id));
    } catch (const OccupancyRangeError& e) {
      skip(e.what());
      continue;
    }
    if (rec.timestamp < last_time) {
      throw SensorCsvError("sensor csv: line " + std::to_string(line_no) + ": timestamp " +
                           format_number(rec.timestamp) + " precedes " +
                           format_number(last_time));
    }
    last_time = rec.timestamp;
    auto& slot = readings[rec.timestamp];
    if (!slot.emplace(rec.sensor_id, density).second) {
      throw SensorCsvError("sensor csv: duplicate reading for sensor '" + rec.sensor_id +
                           "' at timestamp " + fields[column["timestamp"]]);
    }
  }
  if (data_rows == 0) throw SensorCsvError("sensor csv: no data rows");
  if (readings.empty()) return result;

  const double interval = mapping.grid.observation_interval();
  const std::size_t substeps = mapping.grid.substeps_per_observation;
  const double t0 = readings.begin()->first;
  double expected = t0;
  for (const auto& [t, sensors] : readings) {
    const double k = (t - t0) / interval;
    if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k)) {
      result.warnings.push_back("timestamp " + format_number(t) +
                                " is not aligned to the observation interval (skipped)");
      continue;
    }
    const double aligned = t0 + std::round(k) * interval;
    for (; expected < aligned - 0.5 * interval; expected += interval) {
      result.gaps.push_back(expected);
    }
    expected = aligned + interval;

    auto lookup = [&](const std::string& id) -> std::optional<double> {
      const auto it = sensors.find(id);
      if (it == sensors.end()) return std::nullopt;
      return it->second;
    };
    ObservationFrame frame;
    frame.time = t;
    bool complete = true;
    std::vector<std::pair<std::size_t, double>> by_cell;
    for (const auto& [id, cell] : mapping.cell_sensors) {
      const auto value = lookup(id);
      if (!value) {
        complete = false;
        break;
      }
      by_cell.emplace_back(cell, *value);
    }
    const auto left = lookup(mapping.left_boundary_sensor);
    const auto right = lookup(mapping.right_boundary_sensor);
    if (!complete || !left || !right) {
      result.warnings.push_back("timestamp " + format_number(t) +
                                " lacks a mapped sensor reading (frame dropped)");
      result.gaps.push_back(aligned);
      continue;
    }
    std::sort(by_cell.begin(), by_cell.end());
    for (const auto& [cell, value] : by_cell) frame.values.push_back(value);
    frame.boundaries = BoundarySeries::constant(*left, *right, substeps);
    result.frames.push_back(std::move(frame));
  }
  return result;
}

IngestResult ingest_sensor_csv(const std::filesystem::path& path, const SensorMapping& mapping) {
  std::ifstream in(path);
  if (!in) throw SensorCsvError("sensor csv: cannot open " + path.string());
  return ingest_sensor_csv(in, mapping);
}

SensorMapping export_mapping(const SyntheticScenario& scenario) {
  SensorMapping m;
  for (std::size_t cell : scenario.config.sensor_cells) {
    m.cell_sensors["cell_" + std::to_string(cell)] = cell;
  }
  m.left_boundary_sensor = "boundary_left";
  m.right_boundary_sensor = "boundary_right";
  m.effective_vehicle_length = 1.0 / scenario.config.fd_schedule.at(0.0).jam_density();
  m.grid = scenario.config.grid;
  return m;
}

void write_sensor_csv(std::ostream& out, const SyntheticScenario& scenario) {
  const auto mapping = export_mapping(scenario);
  const double length = mapping.effective_vehicle_length;
  const std::size_t m = scenario.config.grid.cells;
  out << "timestamp,sensor_id,occupancy_pct,flow_vph,speed_mps";
  for (std::size_t c = 1; c <= m; ++c) out << ",true_density_veh_per_m_" << c;
  out << '\n';
  for (std::size_t k = 0; k < scenario.frames.size(); ++k) {
    const auto& frame = scenario.frames[k];
    const auto& fd = scenario.true_fd[k];
    const auto& truth = scenario.truth[k];
    auto row = [&](const std::string& id, double density) {
      density = std::clamp(density, 0.0, fd.jam_density());
      const double flow = fd.flow(density);
      out << format_number(frame.time) << ',' << id << ','
          << format_number(std::min(100.0, density * length * 100.0)) << ','
          << format_number(units::vps_to_vph(flow)) << ',';
      if (density > 0.0) out << format_number(flow / density);
      for (double d : truth.density) out << ',' << format_number(d);
      out << '\n';
    };
    row("boundary_left", frame.boundaries.left.back());
    for (std::size_t j = 0; j < scenario.observation.size(); ++j) {
      row("cell_" + std::to_string(scenario.observation.cells()[j]), frame.values[j]);
    }
    row("boundary_right", frame.boundaries.right.back());
  }
}

}  // namespace lwr
