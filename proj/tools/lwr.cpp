// lwr: simulate, filter and compare LWR traffic models from JSON configs.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lwr/filter.hpp"
#include "lwr/format.hpp"
#include "lwr/kde.hpp"
#include "lwr/rng.hpp"
#include "lwr/scenarios.hpp"
#include "lwr/sensor_csv.hpp"
#include "lwr/units.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using lwr::format_number;
using namespace lwr::cli;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::size_t threads = 1;
  bool strict_cfl = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON config or manifest");
  cmd->add_option("--seed", o.seed, "RNG seed (overrides the config)");
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag("--strict-cfl", o.strict_cfl, "Fail instead of warning on CFL violations");
}

json load_body(const CommonOptions& o, const std::string& command) {
  if (o.config.empty()) return json::object();
  return config_body(load_json(o.config), command);
}

void check_top_level(const json& body, std::initializer_list<const char*> allowed) {
  if (!body.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [key, value] : body.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("config: unknown key '" + key + "'");
  }
}

std::uint64_t resolve_seed(const json& body, const CommonOptions& o) {
  if (o.seed) return *o.seed;
  if (!body.contains("seed")) return 0;
  try {
    return body.at("seed").get<std::uint64_t>();
  } catch (const json::exception&) {
    throw ConfigError("config: seed must be a non-negative integer");
  }
}

bool resolve_strict(const json& body, const CommonOptions& o) {
  if (o.strict_cfl) return true;
  if (!body.contains("strict_cfl")) return false;
  if (!body.at("strict_cfl").is_boolean()) throw ConfigError("config: strict_cfl must be a boolean");
  return body.at("strict_cfl").get<bool>();
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory " + dir);
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw InputError("failed writing " + path.string());
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config) {
  const auto path = dir / "manifest.json";
  auto out = open_out(path);
  out << json{{"command", command}, {"config", config}}.dump(2) << '\n';
  finish(out, path);
}

void report_cfl(const lwr::StepStats& stats, const char* what) {
  if (stats.cfl_warnings > 0) {
    std::cerr << "warning: " << what << ": CFL condition violated on " << stats.cfl_warnings
              << " step(s); results may be unstable\n";
  }
}

// Observation stream plus the grid and initial state it was built for.
struct DataStream {
  lwr::RoadGrid grid;
  lwr::ObservationModel observation;
  lwr::DensityState initial;
  std::vector<lwr::ObservationFrame> frames;
};

DataStream load_stream(const json& scenario, const json& data, std::uint64_t seed,
                       lwr::CflPolicy policy) {
  const auto sc = scenario_from_json(scenario, seed, policy);
  DataStream d;
  if (data.at("source") == "synthetic") {
    auto s = lwr::simulate_scenario(sc);
    report_cfl(s.stats, "data generation");
    d.grid = sc.grid;
    d.observation = s.observation;
    d.initial = s.initial;
    d.frames = std::move(s.frames);
    return d;
  }
  sc.grid.validate();
  const auto mapping = mapping_from_json(data, sc.grid);
  auto ingested = lwr::ingest_sensor_csv(fs::path(data.at("path").get<std::string>()), mapping);
  for (const auto& w : ingested.warnings) std::cerr << "warning: " << w << '\n';
  if (!ingested.gaps.empty()) {
    std::cerr << "warning: " << ingested.gaps.size() << " frame(s) missing from the sensor file\n";
  }
  d.grid = sc.grid;
  d.observation = ingested.observation;
  d.initial.density.assign(sc.grid.cells, sc.initial_density);
  d.initial.time = ingested.frames.empty()
                       ? 0.0
                       : ingested.frames.front().time - sc.grid.observation_interval();
  d.frames = std::move(ingested.frames);
  return d;
}

lwr::FilterConfig filter_config(const DataStream& d, const ModelSettings& m, std::uint64_t seed,
                                std::size_t threads, lwr::CflPolicy policy) {
  lwr::FilterConfig c;
  c.grid = d.grid;
  c.observation = d.observation;
  c.noise = m.noise;
  c.jitter = m.jitter;
  c.regularization = m.regularization;
  c.resampling = m.resampling;
  c.cfl_policy = policy;
  c.threads = threads;
  c.seed = lwr::stream_key(seed, {101});
  c.credible_mass = m.credible_mass;
  return c;
}

lwr::FilterRun run_model(const DataStream& d, const ModelSettings& m, std::uint64_t seed,
                         std::size_t threads, lwr::CflPolicy policy) {
  const auto config = filter_config(d, m, seed, threads, policy);
  const auto ensemble =
      lwr::initial_ensemble(m.particles, d.initial, m.prior, m.noise, lwr::stream_key(seed, {102}));
  auto run = lwr::run_filter(ensemble, d.frames, config);
  report_cfl(run.stats, "filter");
  return run;
}

int cmd_simulate(const CommonOptions& o) {
  const json body = load_body(o, "simulate");
  check_top_level(body, {"seed", "strict_cfl", "scenario"});
  json resolved;
  resolved["seed"] = resolve_seed(body, o);
  resolved["strict_cfl"] = resolve_strict(body, o);
  resolved["scenario"] = resolve_scenario(body.value("scenario", json::object()));
  const auto policy = resolved["strict_cfl"].get<bool>() ? lwr::CflPolicy::strict : lwr::CflPolicy::warn;
  const auto config = scenario_from_json(resolved["scenario"], resolved["seed"].get<std::uint64_t>(), policy);
  const auto scenario = lwr::simulate_scenario(config);
  report_cfl(scenario.stats, "simulate");

  const auto dir = prepare_out(o.out);
  {
    const auto path = dir / "trajectory.csv";
    auto out = open_out(path);
    out << "t_s";
    for (std::size_t c = 1; c <= config.grid.cells; ++c) out << ",rho_" << c;
    out << '\n';
    for (const auto& state : scenario.truth) {
      out << format_number(state.time);
      for (double d : state.density) out << ',' << format_number(d);
      out << '\n';
    }
    finish(out, path);
  }
  {
    const auto path = dir / "observations.csv";
    auto out = open_out(path);
    lwr::write_sensor_csv(out, scenario);
    finish(out, path);
  }
  write_manifest(dir, "simulate", resolved);
  std::cout << "simulated " << scenario.truth.size() << " frame(s) into " << dir.string() << '\n';
  return 0;
}

json resolve_filter_body(const json& body, const CommonOptions& o) {
  json resolved;
  resolved["seed"] = resolve_seed(body, o);
  resolved["strict_cfl"] = resolve_strict(body, o);
  resolved["scenario"] = resolve_scenario(body.value("scenario", json::object()));
  resolved["data"] = resolve_data(body.value("data", json::object()), resolved["scenario"]);
  resolved["model"] = resolve_model(body.value("model", json::object()), resolved["scenario"]);
  return resolved;
}

int cmd_filter(const CommonOptions& o) {
  const json body = load_body(o, "filter");
  check_top_level(body, {"seed", "strict_cfl", "scenario", "data", "model"});
  const json resolved = resolve_filter_body(body, o);
  const auto seed = resolved["seed"].get<std::uint64_t>();
  const auto policy = resolved["strict_cfl"].get<bool>() ? lwr::CflPolicy::strict : lwr::CflPolicy::warn;
  const auto model = model_from_json(resolved["model"]);
  const auto stream = load_stream(resolved["scenario"], resolved["data"], seed, policy);
  const auto run = run_model(stream, model, seed, o.threads, policy);

  const auto dir = prepare_out(o.out);
  {
    const auto path = dir / "state_summary.csv";
    auto out = open_out(path);
    out << "t_s,cell,mean,lo2_5,hi97_5\n";
    for (const auto& s : run.summaries) {
      for (std::size_t c = 0; c < s.density.size(); ++c) {
        out << format_number(s.time) << ',' << c + 1 << ',' << format_number(s.density[c].mean)
            << ',' << format_number(s.density[c].lo) << ',' << format_number(s.density[c].hi)
            << '\n';
      }
    }
    finish(out, path);
  }
  {
    const auto path = dir / "parameter_summary.csv";
    auto out = open_out(path);
    out << "t_s,qc_mean,qc_lo,qc_hi,rhoc_mean,rhoc_lo,rhoc_hi\n";
    using lwr::units::vps_to_vph;
    for (const auto& s : run.summaries) {
      out << format_number(s.time) << ',' << format_number(vps_to_vph(s.capacity.mean)) << ','
          << format_number(vps_to_vph(s.capacity.lo)) << ','
          << format_number(vps_to_vph(s.capacity.hi)) << ','
          << format_number(s.critical_density.mean) << ',' << format_number(s.critical_density.lo)
          << ',' << format_number(s.critical_density.hi) << '\n';
    }
    finish(out, path);
  }
  {
    const auto path = dir / "evidence.csv";
    auto out = open_out(path);
    out << "t_s,log_evidence,degenerate\n";
    for (const auto& s : run.summaries) {
      out << format_number(s.time) << ',' << format_number(s.log_evidence) << ','
          << (s.degenerate ? 1 : 0) << '\n';
    }
    finish(out, path);
  }
  write_manifest(dir, "filter", resolved);
  if (run.degenerate_frames > 0) {
    std::cerr << "warning: " << run.degenerate_frames
              << " frame(s) had no particle with positive likelihood (uniform weights used)\n";
  }
  std::cout << "frames " << run.summaries.size() << "\nlog_evidence "
            << format_number(run.log_evidence) << '\n';
  return 0;
}

int cmd_mixture(const CommonOptions& o) {
  const json body = load_body(o, "experiment mixture");
  check_top_level(body, {"seed", "mixture"});
  json resolved;
  resolved["seed"] = resolve_seed(body, o);
  resolved["mixture"] = resolve_mixture(body.value("mixture", json::object()));
  const auto m = mixture_from_json(resolved["mixture"]);
  const auto speeds = lwr::mixture_experiment(m.fd, m.left, m.right, m.samples,
                                              resolved["seed"].get<std::uint64_t>());
  const auto dir = prepare_out(o.out);
  {
    const auto path = dir / "shock_speeds.csv";
    auto out = open_out(path);
    out << "sample,shock_speed_mps\n";
    for (std::size_t i = 0; i < speeds.size(); ++i) out << i << ',' << format_number(speeds[i]) << '\n';
    finish(out, path);
  }
  {
    const auto path = dir / "kde_modes.csv";
    auto out = open_out(path);
    out << "mode,location_mps,density,mass,lower_mps,upper_mps\n";
    if (speeds.size() < 2) {
      std::cerr << "notice: mode analysis skipped (needs at least 2 samples)\n";
      std::cout << "modes skipped\n";
    } else {
      const auto modes = lwr::kde_modes(speeds).significant_modes(m.min_mode_mass);
      for (std::size_t i = 0; i < modes.size(); ++i) {
        out << i + 1 << ',' << format_number(modes[i].location) << ','
            << format_number(modes[i].density) << ',' << format_number(modes[i].mass) << ','
            << format_number(modes[i].lower) << ',' << format_number(modes[i].upper) << '\n';
      }
      std::cout << "modes " << modes.size() << '\n';
    }
    finish(out, path);
  }
  write_manifest(dir, "experiment mixture", resolved);
  return 0;
}

int cmd_compare(const CommonOptions& o, const std::string& m0_config) {
  const json body = load_body(o, "compare-models");
  check_top_level(body, {"seed", "strict_cfl", "scenario", "data", "model", "m0_model"});
  json m1_body = body;
  m1_body.erase("m0_model");
  json resolved = resolve_filter_body(m1_body, o);
  if (!m0_config.empty()) {
    const json m0 = config_body(load_json(m0_config), "compare-models");
    check_top_level(m0, {"seed", "strict_cfl", "scenario", "data", "model"});
    if ((m0.contains("scenario") && resolve_scenario(m0.at("scenario")) != resolved["scenario"]) ||
        (m0.contains("data") && resolve_data(m0.at("data"), resolved["scenario"]) != resolved["data"])) {
      throw ConfigError("compare-models: the two configs describe different observation streams");
    }
    resolved["m0_model"] = resolve_model(m0.value("model", json::object()), resolved["scenario"]);
  } else if (body.contains("m0_model")) {
    resolved["m0_model"] = resolve_model(body.at("m0_model"), resolved["scenario"]);
  } else {
    throw ConfigError("compare-models: no model for M0 (use --m0-config)");
  }

  const auto seed = resolved["seed"].get<std::uint64_t>();
  const auto policy = resolved["strict_cfl"].get<bool>() ? lwr::CflPolicy::strict : lwr::CflPolicy::warn;
  const auto m1 = model_from_json(resolved["model"]);
  const auto m0 = model_from_json(resolved["m0_model"]);
  const auto stream = load_stream(resolved["scenario"], resolved["data"], seed, policy);
  const auto run1 = run_model(stream, m1, seed, o.threads, policy);
  const auto run0 = run_model(stream, m0, seed, o.threads, policy);

  const auto dir = prepare_out(o.out);
  double log_b = 0.0;
  {
    const auto path = dir / "bayes_factor.csv";
    auto out = open_out(path);
    out << "t_s,log_bayes_factor\n";
    for (std::size_t k = 0; k < run1.summaries.size(); ++k) {
      log_b = lwr::bayes_factor_update(log_b, run1.frame_log_evidence[k], run0.frame_log_evidence[k]);
      out << format_number(run1.summaries[k].time) << ',' << format_number(log_b) << '\n';
    }
    finish(out, path);
  }
  write_manifest(dir, "compare-models", resolved);
  std::cout << "frames " << run1.summaries.size() << "\nlog_bayes_factor " << format_number(log_b)
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LWR traffic state and parameter estimation"};
  app.require_subcommand(1);
  CommonOptions common;

  auto* simulate = app.add_subcommand("simulate", "Run the deterministic solver on a scenario");
  add_common(simulate, common);
  auto* filter = app.add_subcommand("filter", "Particle filter with parameter learning");
  add_common(filter, common);
  auto* experiment = app.add_subcommand("experiment", "Monte Carlo experiments");
  experiment->require_subcommand(1);
  auto* mixture = experiment->add_subcommand("mixture", "Shock-speed mixture experiment");
  add_common(mixture, common);
  auto* compare = app.add_subcommand("compare-models", "Sequential Bayes factor of M1 against M0");
  add_common(compare, common);
  std::string m0_config;
  compare->add_option("--m0-config", m0_config, "Config for the alternative model M0");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*simulate) return cmd_simulate(common);
    if (*filter) return cmd_filter(common);
    if (*mixture) return cmd_mixture(common);
    if (*compare) return cmd_compare(common, m0_config);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const lwr::SensorCsvError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const lwr::IngestionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const lwr::CflViolationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
