#include <doctest.h>

#include <cmath>

#include "lwr/kde.hpp"
#include "lwr/scenarios.hpp"
#include "lwr/units.hpp"

using namespace lwr;

namespace {

const FundamentalDiagram kReference = FundamentalDiagram::from_vph(1600.0, 0.025, 0.2);

}  // namespace

TEST_CASE("schedule lookup") {
  Schedule<double> s{{0.0, 1.0}, {10.0, 2.0}, {20.0, 3.0}};
  CHECK(s.at(-5.0) == 1.0);
  CHECK(s.at(0.0) == 1.0);
  CHECK(s.at(9.999) == 1.0);
  CHECK(s.at(10.0) == 2.0);
  CHECK(s.at(1e9) == 3.0);
  CHECK_THROWS(Schedule<double>{}.at(0.0));
}

TEST_CASE("calibration defaults") {
  const auto config = calibration_config();
  CHECK(config.grid.cells == 5);
  CHECK(config.grid.cell_length == 300.0);
  CHECK(config.grid.time_step == 5.0);
  CHECK(std::sqrt(config.noise.observation_variance) == doctest::Approx(0.008));
  CHECK(std::sqrt(config.noise.evolution_variance) == doctest::Approx(0.001));
  CHECK(config.sensor_cells == std::vector<std::size_t>{1, 5});
  CHECK(config.right_boundary.at(179.0) < 0.145);
  CHECK(config.right_boundary.at(180.0) == 0.145);
  CHECK(config.right_boundary.at(600.0) == 0.0);

  const auto s = generate_calibration_scenario();
  CHECK(s.frames.size() == 320);
  CHECK(s.truth.size() == 320);
  CHECK(s.frames.front().time == 5.0);
  CHECK(s.frames.back().time == 1600.0);
  CHECK(s.stats.clamp_events == 0);
  for (const auto& t : s.truth) {
    for (double d : t.density) {
      CHECK(d >= 0.0);
      CHECK(d <= 0.2);
    }
  }
}

TEST_CASE("zero observation noise reproduces H times the truth") {
  CalibrationOptions o;
  o.observation_sd = 0.0;
  const auto s = generate_calibration_scenario(o);
  for (std::size_t k = 0; k < s.frames.size(); ++k) {
    CHECK(s.frames[k].values == s.observation.apply(s.truth[k].density));
  }
}

TEST_CASE("scenario reproducibility") {
  CalibrationOptions o;
  o.seed = 77;
  const auto a = generate_calibration_scenario(o);
  const auto b = generate_calibration_scenario(o);
  for (std::size_t k = 0; k < a.frames.size(); ++k) {
    CHECK(a.frames[k].values == b.frames[k].values);
    CHECK(a.truth[k].density == b.truth[k].density);
  }
  o.seed = 78;
  const auto c = generate_calibration_scenario(o);
  CHECK(a.frames[10].values != c.frames[10].values);
}

TEST_CASE("observation noise has the configured spread") {
  ScenarioConfig c;
  c.grid = RoadGrid{3, 300.0, 5.0, 1};
  c.fd_schedule = Schedule<FundamentalDiagram>(kReference);
  c.left_boundary = Schedule<double>(0.05);
  c.right_boundary = Schedule<double>(0.05);
  c.initial_density = 0.05;
  c.noise = NoiseSpec::from_sd(0.008, 0.0);
  c.sensor_cells = {2};
  c.horizon = 5.0 * 20000;
  const auto s = simulate_scenario(c);
  REQUIRE(s.frames.size() == 20000);
  double m = 0.0, s2 = 0.0;
  for (const auto& f : s.frames) {
    const double e = f.values[0] - 0.05;
    m += e;
    s2 += e * e;
  }
  const double n = static_cast<double>(s.frames.size());
  const double sd = std::sqrt(s2 / n - (m / n) * (m / n));
  CHECK(std::abs(sd - 0.008) <= 0.05 * 0.008);
}

TEST_CASE("scenario validation") {
  auto c = calibration_config();
  SUBCASE("CFL violation") {
    c.grid.time_step = 30.0;
    CHECK_THROWS_AS(c.validate(), CflViolationError);
  }
  SUBCASE("bad boundary") {
    c.right_boundary = Schedule<double>(0.5);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  }
  SUBCASE("bad sensors") {
    c.sensor_cells = {0};
    CHECK_THROWS(c.validate());
  }
  SUBCASE("negative horizon") {
    c.horizon = -1.0;
    CHECK_THROWS(c.validate());
  }
  SUBCASE("zero horizon is empty") {
    c.horizon = 0.0;
    CHECK(simulate_scenario(c).frames.empty());
  }
}

TEST_CASE("accident scenario") {
  AccidentOptions o;
  SUBCASE("capacity inside the window") {
    const auto s = generate_accident_scenario(o);
    const double interval = o.grid.observation_interval();
    CHECK(interval == 300.0);
    REQUIRE(s.frames.size() == 30);
    for (std::size_t k = 0; k < s.frames.size(); ++k) {
      // true_fd[k] is the diagram in force during the interval ending at frame k.
      const double start = s.frames[k].time - interval;
      const bool inside = start >= o.drop_start && start < o.drop_end;
      const double expected = inside ? 0.34 * o.baseline.capacity() : o.baseline.capacity();
      CHECK(s.true_fd[k].capacity() == doctest::Approx(expected));
    }
    CHECK(check_cfl(o.baseline, o.grid).satisfied);
  }
  SUBCASE("no drop is a plain run") {
    o.drop_fraction = 0.0;
    const auto a = generate_accident_scenario(o);
    auto plain = accident_config(o);
    CHECK(plain.fd_schedule.points.size() == 1);
    const auto b = simulate_scenario(plain);
    for (std::size_t k = 0; k < a.frames.size(); ++k) CHECK(a.frames[k].values == b.frames[k].values);
  }
  SUBCASE("window outside the horizon") {
    o.drop_end = o.horizon + 1.0;
    CHECK_THROWS_AS(accident_config(o), std::invalid_argument);
  }
  SUBCASE("bad fraction") {
    o.drop_fraction = 1.0;
    CHECK_THROWS(accident_config(o));
  }
}

TEST_CASE("truncated normal sampler") {
  const TruncatedNormalSpec spec{0.02, 0.01, 0.0, 0.2};
  const int n = 50000;
  double m = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    auto rng = make_rng(8, {static_cast<std::uint64_t>(i)});
    const double x = sample_truncated_normal(spec, rng);
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 0.2);
    m += x;
    s2 += x * x;
  }
  const double mean = m / n;
  const double sd = std::sqrt(s2 / n - mean * mean);
  CHECK(std::abs(mean - spec.truncated_mean()) <= 3.0 * sd / std::sqrt(double(n)));
  CHECK(spec.truncated_mean() > 0.02);

  // Symmetric truncation keeps the mean.
  CHECK(TruncatedNormalSpec{0.5, 0.1, 0.3, 0.7}.truncated_mean() == doctest::Approx(0.5));
  CHECK_THROWS(TruncatedNormalSpec{0.0, 1.0, 1.0, 1.0}.validate());
  CHECK_THROWS(TruncatedNormalSpec{0.0, 0.0, 0.0, 1.0}.validate());
  auto rng = make_rng(1, {});
  CHECK_THROWS_AS(sample_truncated_normal({0.0, 1e-3, 10.0, 11.0}, rng, 100), std::runtime_error);
}

TEST_CASE("mixture experiment") {
  const TruncatedNormalSpec left{0.02, 0.01, 0.0, 0.2};
  const TruncatedNormalSpec right{0.03, 0.01, 0.0, 0.2};
  SUBCASE("default specs give a bimodal sample") {
    const auto speeds = mixture_experiment(kReference, left, right, 1000, 1);
    CHECK(speeds.size() == 1000);
    CHECK(kde_modes(speeds).significant_modes(0.1).size() >= 2);
  }
  SUBCASE("degenerate limit") {
    const auto speeds = mixture_experiment(kReference, {0.02, 1e-12, 0.0, 0.2},
                                           {0.03, 1e-12, 0.0, 0.2}, 200, 2);
    for (double s : speeds) CHECK(s == doctest::Approx(7.619047619).epsilon(1e-6));
    CHECK(kde_modes(speeds).significant_modes(0.1).size() == 1);
  }
  SUBCASE("identical point specs cannot produce a shock") {
    CHECK_THROWS_AS(mixture_experiment(kReference, {0.02, 1e-20, 0.0, 0.2},
                                       {0.02, 1e-20, 0.0, 0.2}, 10, 3),
                    std::runtime_error);
  }
  SUBCASE("reproducible") {
    CHECK(mixture_experiment(kReference, left, right, 100, 5) ==
          mixture_experiment(kReference, left, right, 100, 5));
  }
  SUBCASE("needs samples") { CHECK_THROWS(mixture_experiment(kReference, left, right, 0, 5)); }
}

TEST_CASE("occupancy conversion") {
  CHECK(occupancy_to_density(0.0) == 0.0);
  CHECK(occupancy_to_density(100.0) == doctest::Approx(0.153846).epsilon(1e-5));
  CHECK(occupancy_to_density(13.0) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(occupancy_to_density(50.0, 5.0) == doctest::Approx(0.1));
  CHECK_THROWS_AS(occupancy_to_density(100.5), OccupancyRangeError);
  CHECK_THROWS_AS(occupancy_to_density(-1.0), OccupancyRangeError);
  CHECK_THROWS_AS(occupancy_to_density(10.0, 0.0), std::invalid_argument);
}
