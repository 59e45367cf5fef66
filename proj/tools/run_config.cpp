#include "run_config.hpp"

#include <fstream>
#include <set>

#include "lwr/units.hpp"

namespace lwr::cli {

namespace {

void check_keys(const json& object, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!object.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : object.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T field(const json& object, const std::string& key, const std::string& where) {
  if (!object.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  try {
    return object.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": '" + key + "' has the wrong type");
  }
}

json fd_json(double capacity_vph, double critical, double jam) {
  return {{"capacity_vph", capacity_vph}, {"critical_density", critical}, {"jam_density", jam}};
}

json fd_json(const FundamentalDiagram& fd) {
  return fd_json(fd.capacity_vph(), fd.critical_density(), fd.jam_density());
}

FundamentalDiagram fd_from(const json& j, const std::string& where) {
  check_keys(j, {"capacity_vph", "critical_density", "jam_density", "start_s"}, where);
  return FundamentalDiagram::from_vph(field<double>(j, "capacity_vph", where),
                                      field<double>(j, "critical_density", where),
                                      field<double>(j, "jam_density", where));
}

json grid_json(const RoadGrid& g) {
  return {{"cells", g.cells},
          {"cell_length_m", g.cell_length},
          {"time_step_s", g.time_step},
          {"substeps_per_observation", g.substeps_per_observation}};
}

RoadGrid grid_from(const json& j) {
  const std::string where = "scenario.grid";
  check_keys(j, {"cells", "cell_length_m", "time_step_s", "substeps_per_observation"}, where);
  RoadGrid g{field<std::size_t>(j, "cells", where), field<double>(j, "cell_length_m", where),
             field<double>(j, "time_step_s", where),
             field<std::size_t>(j, "substeps_per_observation", where)};
  g.validate();
  return g;
}

json schedule_json(const Schedule<double>& s) {
  json out = json::array();
  for (const auto& [start, value] : s.points) out.push_back({{"start_s", start}, {"density", value}});
  return out;
}

Schedule<double> density_schedule_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty array");
  Schedule<double> s;
  for (const auto& p : j) {
    check_keys(p, {"start_s", "density"}, where);
    s.points.emplace_back(field<double>(p, "start_s", where), field<double>(p, "density", where));
  }
  return s;
}

json scenario_preset(const std::string& kind, const json& accident_overrides) {
  json out;
  out["kind"] = kind;
  if (kind == "calibration") {
    const CalibrationOptions o;
    const auto c = calibration_config(o);
    out["grid"] = grid_json(c.grid);
    out["horizon_s"] = o.horizon;
    out["initial_density"] = o.initial_density;
    json fds = json::array();
    for (const auto& [start, fd] : o.fd_schedule.points) {
      auto f = fd_json(fd);
      f["start_s"] = start;
      fds.push_back(f);
    }
    out["fd_schedule"] = fds;
    out["left_boundary"] = schedule_json(c.left_boundary);
    out["right_boundary"] = schedule_json(c.right_boundary);
    out["noise"] = {{"observation_sd", o.observation_sd}, {"evolution_sd", o.evolution_sd}};
    out["sensor_cells"] = o.sensor_cells;
    return out;
  }
  if (kind == "accident") {
    AccidentOptions o;
    const std::string where = "scenario.accident";
    check_keys(accident_overrides, {"drop_fraction", "drop_start_s", "drop_end_s"}, where);
    if (accident_overrides.contains("drop_fraction"))
      o.drop_fraction = field<double>(accident_overrides, "drop_fraction", where);
    if (accident_overrides.contains("drop_start_s"))
      o.drop_start = field<double>(accident_overrides, "drop_start_s", where);
    if (accident_overrides.contains("drop_end_s"))
      o.drop_end = field<double>(accident_overrides, "drop_end_s", where);
    ScenarioConfig c;
    try {
      c = accident_config(o);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    out["accident"] = {{"drop_fraction", o.drop_fraction},
                       {"drop_start_s", o.drop_start},
                       {"drop_end_s", o.drop_end}};
    out["grid"] = grid_json(c.grid);
    out["horizon_s"] = o.horizon;
    out["initial_density"] = o.initial_density;
    json fds = json::array();
    for (const auto& [start, fd] : c.fd_schedule.points) {
      auto f = fd_json(fd);
      f["start_s"] = start;
      fds.push_back(f);
    }
    out["fd_schedule"] = fds;
    out["left_boundary"] = schedule_json(c.left_boundary);
    out["right_boundary"] = schedule_json(c.right_boundary);
    out["noise"] = {{"observation_sd", 0.2e-2}, {"evolution_sd", 0.1e-2}};
    out["sensor_cells"] = o.sensor_cells;
    return out;
  }
  throw ConfigError("scenario.kind must be \"calibration\" or \"accident\", got \"" + kind + "\"");
}

}  // namespace

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("cannot parse " + path.string() + ": " + e.what());
  }
}

json config_body(const json& document, const std::string& command) {
  if (!document.is_object()) throw ConfigError("config: expected a JSON object");
  if (document.contains("command") && document.contains("config")) {
    if (document.at("command") != command) {
      throw ConfigError("manifest was written by '" + document.at("command").get<std::string>() +
                        "', not '" + command + "'");
    }
    return document.at("config");
  }
  return document;
}

json resolve_scenario(const json& user) {
  const json empty = json::object();
  const json& u = user.is_null() ? empty : user;
  check_keys(u,
             {"kind", "accident", "grid", "horizon_s", "initial_density", "fd_schedule",
              "left_boundary", "right_boundary", "noise", "sensor_cells"},
             "scenario");
  const std::string kind = u.value("kind", std::string("calibration"));
  json resolved = scenario_preset(kind, u.value("accident", json::object()));
  json patch = u;
  patch.erase("accident");
  resolved.merge_patch(patch);
  return resolved;
}

ScenarioConfig scenario_from_json(const json& r, std::uint64_t seed, CflPolicy policy) {
  const std::string where = "scenario";
  ScenarioConfig c;
  c.grid = grid_from(r.at("grid"));
  c.horizon = field<double>(r, "horizon_s", where);
  c.initial_density = field<double>(r, "initial_density", where);
  const auto& fds = r.at("fd_schedule");
  if (!fds.is_array() || fds.empty()) throw ConfigError("scenario.fd_schedule: expected a non-empty array");
  for (const auto& f : fds) {
    c.fd_schedule.points.emplace_back(field<double>(f, "start_s", "scenario.fd_schedule"),
                                      fd_from(f, "scenario.fd_schedule"));
  }
  c.left_boundary = density_schedule_from(r.at("left_boundary"), "scenario.left_boundary");
  c.right_boundary = density_schedule_from(r.at("right_boundary"), "scenario.right_boundary");
  const auto& n = r.at("noise");
  check_keys(n, {"observation_sd", "evolution_sd"}, "scenario.noise");
  c.noise = NoiseSpec::from_sd(field<double>(n, "observation_sd", "scenario.noise"),
                               field<double>(n, "evolution_sd", "scenario.noise"));
  c.sensor_cells = field<std::vector<std::size_t>>(r, "sensor_cells", where);
  c.seed = seed;
  c.cfl_policy = policy;
  return c;
}

json resolve_model(const json& user, const json& scenario) {
  const json empty = json::object();
  const json& u = user.is_null() ? empty : user;
  check_keys(u,
             {"particles", "prior", "jitter", "regularization", "noise", "resampling",
              "credible_mass"},
             "model");
  const bool accident = scenario.value("kind", std::string()) == "accident";
  const auto setup = accident ? accident_learning() : calibration_learning();
  json base;
  base["particles"] = accident ? 5000 : 1000;
  base["prior"] = {{"capacity_vph", {units::vps_to_vph(setup.prior.capacity_lo),
                                     units::vps_to_vph(setup.prior.capacity_hi)}},
                   {"critical_density",
                    {setup.prior.critical_density_lo, setup.prior.critical_density_hi}},
                   {"jam_density", setup.prior.jam_density}};
  base["jitter"] = {{"capacity_vph", units::vps_to_vph(setup.jitter.capacity)},
                    {"critical_density", setup.jitter.critical_density},
                    {"jam_density", setup.jitter.jam_density}};
  base["regularization"] = {{"enabled", setup.regularization.enabled},
                            {"free_flow_speed_mps", setup.regularization.free_flow_speed},
                            {"speed_sd_mps", setup.regularization.speed_sd}};
  base["noise"] = scenario.at("noise");
  base["resampling"] = "multinomial";
  base["credible_mass"] = 0.95;
  base.merge_patch(u);
  return base;
}

ModelSettings model_from_json(const json& r) {
  const std::string where = "model";
  ModelSettings m;
  const auto particles = field<long long>(r, "particles", where);
  if (particles < 1) throw ConfigError("model.particles must be >= 1");
  m.particles = static_cast<std::size_t>(particles);

  const auto& p = r.at("prior");
  check_keys(p, {"capacity_vph", "critical_density", "jam_density"}, "model.prior");
  auto range = [&](const std::string& key) {
    const auto v = field<std::vector<double>>(p, key, "model.prior");
    if (v.size() != 2) throw ConfigError("model.prior." + key + ": expected [lo, hi]");
    return v;
  };
  const auto q = range("capacity_vph");
  const auto rc = range("critical_density");
  m.prior = {units::vph_to_vps(q[0]), units::vph_to_vps(q[1]), rc[0], rc[1],
             field<double>(p, "jam_density", "model.prior")};

  const auto& j = r.at("jitter");
  check_keys(j, {"capacity_vph", "critical_density", "jam_density"}, "model.jitter");
  m.jitter = {units::vph_to_vps(field<double>(j, "capacity_vph", "model.jitter")),
              field<double>(j, "critical_density", "model.jitter"),
              field<double>(j, "jam_density", "model.jitter")};

  const auto& g = r.at("regularization");
  check_keys(g, {"enabled", "free_flow_speed_mps", "speed_sd_mps"}, "model.regularization");
  m.regularization = {field<bool>(g, "enabled", "model.regularization"),
                      field<double>(g, "free_flow_speed_mps", "model.regularization"),
                      field<double>(g, "speed_sd_mps", "model.regularization")};

  const auto& n = r.at("noise");
  check_keys(n, {"observation_sd", "evolution_sd"}, "model.noise");
  m.noise = NoiseSpec::from_sd(field<double>(n, "observation_sd", "model.noise"),
                               field<double>(n, "evolution_sd", "model.noise"));

  const auto scheme = field<std::string>(r, "resampling", where);
  if (scheme == "multinomial") {
    m.resampling = ResamplingScheme::multinomial;
  } else if (scheme == "systematic") {
    m.resampling = ResamplingScheme::systematic;
  } else {
    throw ConfigError("model.resampling must be \"multinomial\" or \"systematic\"");
  }
  m.credible_mass = field<double>(r, "credible_mass", where);

  m.prior.validate();
  m.jitter.validate();
  m.regularization.validate();
  m.noise.validate();
  return m;
}

json resolve_data(const json& user, const json& scenario) {
  const json empty = json::object();
  const json& u = user.is_null() ? empty : user;
  check_keys(u, {"source", "path", "mapping"}, "data");
  const std::string source = u.value("source", std::string("synthetic"));
  if (source == "synthetic") {
    if (u.contains("path") || u.contains("mapping")) {
      throw ConfigError("data: 'path' and 'mapping' apply only to source \"csv\"");
    }
    return {{"source", "synthetic"}};
  }
  if (source != "csv") throw ConfigError("data.source must be \"synthetic\" or \"csv\"");
  json out;
  out["source"] = "csv";
  out["path"] = std::filesystem::absolute(field<std::string>(u, "path", "data")).lexically_normal().string();
  // Defaults read back a file written by `lwr simulate` for the same scenario.
  json cells = json::object();
  for (const auto& c : scenario.at("sensor_cells")) {
    cells["cell_" + std::to_string(c.get<std::size_t>())] = c;
  }
  const double jam = scenario.at("fd_schedule").at(0).at("jam_density").get<double>();
  json mapping = {{"left_boundary_sensor", "boundary_left"},
                  {"right_boundary_sensor", "boundary_right"},
                  {"cell_sensors", cells},
                  {"effective_vehicle_length_m", jam > 0.0 ? 1.0 / jam : 6.5},
                  {"vehicle_length_overrides_m", json::object()}};
  if (u.contains("mapping")) {
    const auto& um = u.at("mapping");
    check_keys(um,
               {"cell_sensors", "left_boundary_sensor", "right_boundary_sensor",
                "effective_vehicle_length_m", "vehicle_length_overrides_m"},
               "data.mapping");
    for (const auto& [key, value] : um.items()) mapping[key] = value;
  }
  out["mapping"] = mapping;
  return out;
}

SensorMapping mapping_from_json(const json& r, const RoadGrid& grid) {
  const std::string where = "data.mapping";
  const auto& j = r.at("mapping");
  SensorMapping m;
  m.grid = grid;
  for (const auto& [id, cell] : j.at("cell_sensors").items()) {
    try {
      m.cell_sensors[id] = cell.get<std::size_t>();
    } catch (const json::exception&) {
      throw ConfigError(where + ".cell_sensors: cell for '" + id + "' must be a positive integer");
    }
  }
  m.left_boundary_sensor = field<std::string>(j, "left_boundary_sensor", where);
  m.right_boundary_sensor = field<std::string>(j, "right_boundary_sensor", where);
  if (m.left_boundary_sensor.empty() || m.right_boundary_sensor.empty()) {
    throw ConfigError(where + ": boundary sensors must be named");
  }
  m.effective_vehicle_length = field<double>(j, "effective_vehicle_length_m", where);
  for (const auto& [id, len] : j.at("vehicle_length_overrides_m").items()) {
    m.vehicle_length_overrides[id] = len.get<double>();
  }
  return m;
}

json resolve_mixture(const json& user) {
  const json empty = json::object();
  const json& u = user.is_null() ? empty : user;
  check_keys(u, {"fd", "left", "right", "samples", "min_mode_mass"}, "mixture");
  json base;
  base["fd"] = fd_json(1600.0, 0.025, 0.2);
  base["left"] = {{"mean", 0.02}, {"sd", 0.01}, {"lower", 0.0}, {"upper", 0.2}};
  base["right"] = {{"mean", 0.03}, {"sd", 0.01}, {"lower", 0.0}, {"upper", 0.2}};
  base["samples"] = 1000;
  base["min_mode_mass"] = 0.1;
  base.merge_patch(u);
  return base;
}

MixtureSettings mixture_from_json(const json& r) {
  MixtureSettings m;
  m.fd = fd_from(r.at("fd"), "mixture.fd");
  auto tn = [&](const std::string& key) {
    const auto& j = r.at(key);
    const std::string where = "mixture." + key;
    check_keys(j, {"mean", "sd", "lower", "upper"}, where);
    TruncatedNormalSpec s{field<double>(j, "mean", where), field<double>(j, "sd", where),
                          field<double>(j, "lower", where), field<double>(j, "upper", where)};
    s.validate();
    return s;
  };
  m.left = tn("left");
  m.right = tn("right");
  const auto samples = field<long long>(r, "samples", "mixture");
  if (samples < 1) throw ConfigError("mixture.samples must be >= 1");
  m.samples = static_cast<std::size_t>(samples);
  m.min_mode_mass = field<double>(r, "min_mode_mass", "mixture");
  return m;
}

}  // namespace lwr::cli
