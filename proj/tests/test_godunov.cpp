#include <doctest.h>

#include <cmath>
#include <random>

#include "lwr/godunov.hpp"
#include "lwr/units.hpp"

using namespace lwr;

namespace {

const FundamentalDiagram kReference = FundamentalDiagram::from_vph(1600.0, 0.025, 0.2);

RoadGrid grid_of(std::size_t cells, double h, double tau) { return RoadGrid{cells, h, tau, 1}; }

// Position of the equivalent sharp front implied by the vehicle count between
// two far-field states: N = rho_l * (X - x0) + rho_r * (x1 - X).
double mass_front(const DensityState& s, const RoadGrid& g, double rho_l, double rho_r) {
  const double total = total_vehicles(s, g);
  return (total - rho_r * g.length()) / (rho_l - rho_r);
}

// First cell-centre crossing of the mid-level between upstream and downstream states.
double crossing_front(const DensityState& s, const RoadGrid& g, double level) {
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double a = s.density[i] - level;
    const double b = s.density[i + 1] - level;
    if (a == 0.0) return (static_cast<double>(i) + 0.5) * g.cell_length;
    if ((a < 0.0) != (b < 0.0)) {
      return (static_cast<double>(i) + 0.5 + a / (a - b)) * g.cell_length;
    }
  }
  return NAN;
}

}  // namespace

TEST_CASE("grid validation") {
  CHECK_THROWS(RoadGrid{0, 300.0, 5.0, 1}.validate());
  CHECK_THROWS(RoadGrid{5, 0.0, 5.0, 1}.validate());
  CHECK_THROWS(RoadGrid{5, 300.0, -1.0, 1}.validate());
  CHECK_THROWS(RoadGrid{5, 300.0, 5.0, 0}.validate());
  CHECK_NOTHROW(RoadGrid{5, 300.0, 5.0, 1}.validate());
}

TEST_CASE("CFL reports") {
  auto ok = check_cfl(kReference, grid_of(5, 300.0, 5.0));
  CHECK(ok.satisfied);
  CHECK(ok.max_wave_speed == doctest::Approx(17.7778).epsilon(1e-4));
  CHECK(ok.max_time_step == doctest::Approx(16.875).epsilon(1e-9));

  auto bad = check_cfl(kReference, grid_of(4, 211.0, 300.0));
  CHECK_FALSE(bad.satisfied);
  CHECK(bad.max_time_step == doctest::Approx(11.86875).epsilon(1e-9));

  // v_max exactly h / tau is allowed
  const FundamentalDiagram exact(2.0, 0.1, 0.3);  // v_f = 20 m/s
  CHECK(check_cfl(exact, grid_of(3, 100.0, 5.0)).satisfied);
}

TEST_CASE("step: uniform state is a fixed point") {
  const auto g = grid_of(6, 300.0, 5.0);
  for (double c : {0.0, 0.01, 0.025, 0.08, 0.2}) {
    DensityState s{std::vector<double>(6, c), 0.0};
    auto next = step(s, c, c, kReference, g);
    for (double d : next.density) CHECK(d == doctest::Approx(c).epsilon(1e-15));
    CHECK(next.time == doctest::Approx(5.0));
  }
}

TEST_CASE("step: hand-evaluated inflow update") {
  const auto g = grid_of(3, 300.0, 5.0);
  DensityState s{{0.01, 0.01, 0.01}, 0.0};
  auto next = step(s, 0.05, 0.01, kReference, g);
  CHECK(next.density[0] == doctest::Approx(0.01 + (5.0 / 300.0) * (1600.0 - 640.0) / 3600.0));
  CHECK(next.density[0] == doctest::Approx(0.014444).epsilon(1e-4));
  CHECK(next.density[1] == doctest::Approx(0.01));
  CHECK(next.density[2] == doctest::Approx(0.01));
}

TEST_CASE("step: strict CFL refuses, warn proceeds and counts") {
  const auto g = grid_of(4, 211.0, 300.0);
  DensityState s{std::vector<double>(4, 0.01), 0.0};
  CHECK_THROWS_AS(step(s, 0.01, 0.01, kReference, g, CflPolicy::strict), CflViolationError);
  StepStats stats;
  CHECK_NOTHROW(step(s, 0.01, 0.01, kReference, g, CflPolicy::warn, &stats));
  CHECK(stats.cfl_warnings == 1);
}

TEST_CASE("step: clamping of out-of-range updates is counted") {
  // tau far beyond CFL drives the first cell past jam density.
  const auto g = grid_of(2, 10.0, 60.0);
  DensityState s{{0.19, 0.2}, 0.0};
  StepStats stats;
  auto next = step(s, 0.025, 0.2, kReference, g, CflPolicy::warn, &stats);
  CHECK(next.density[0] <= kReference.jam_density());
  CHECK(stats.clamp_events >= 1);
}

TEST_CASE("evolve composes steps") {
  const auto g = grid_of(4, 300.0, 5.0);
  DensityState s{{0.01, 0.03, 0.05, 0.02}, 0.0};
  auto b = BoundarySeries::constant(0.02, 0.1, 3);
  CHECK(evolve(s, b, kReference, g, 0).density == s.density);
  CHECK(evolve(s, b, kReference, g, 1).density == step(s, 0.02, 0.1, kReference, g).density);
  auto two = step(step(s, 0.02, 0.1, kReference, g), 0.02, 0.1, kReference, g);
  CHECK(evolve(s, b, kReference, g, 2).density == two.density);
  CHECK_THROWS(evolve(s, b, kReference, g, 4));
}

TEST_CASE("total vehicles") {
  const auto g = grid_of(5, 300.0, 5.0);
  CHECK(total_vehicles(DensityState{std::vector<double>(5, 0.0), 0.0}, g) == 0.0);
  CHECK(total_vehicles(DensityState{std::vector<double>(5, 0.01), 0.0}, g) ==
        doctest::Approx(15.0));
}

TEST_CASE("conservation and invariant region under CFL") {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const auto fd = FundamentalDiagram::from_vph(1000.0 + 1500.0 * unit(gen),
                                                 0.015 + 0.025 * unit(gen), 0.12 + 0.1 * unit(gen));
    RoadGrid g{1 + static_cast<std::size_t>(unit(gen) * 12), 100.0 + 300.0 * unit(gen), 1.0, 1};
    g.time_step = unit(gen) * g.cell_length / fd.max_wave_speed();
    DensityState s;
    for (std::size_t i = 0; i < g.cells; ++i) s.density.push_back(unit(gen) * fd.jam_density());
    const double left = unit(gen) * fd.jam_density();
    const double right = unit(gen) * fd.jam_density();
    StepStats stats;
    const auto next = step(s, left, right, fd, g, CflPolicy::strict, &stats);
    const double expected = g.time_step * (fd.godunov_flux(left, s.density.front()) -
                                           fd.godunov_flux(s.density.back(), right));
    const double change = total_vehicles(next, g) - total_vehicles(s, g);
    const double scale = std::max({total_vehicles(s, g), total_vehicles(next, g), 1e-300});
    CHECK(std::abs(change - expected) <= 1e-12 * scale);
    CHECK(stats.clamp_events == 0);
  }
}

TEST_CASE("closed road conserves vehicles exactly over many steps") {
  // Zero boundary flux: empty upstream, jammed downstream.
  const auto g = grid_of(8, 300.0, 5.0);
  DensityState s{{0.0, 0.02, 0.04, 0.1, 0.15, 0.03, 0.07, 0.2}, 0.0};
  const double before = total_vehicles(s, g);
  auto b = BoundarySeries::constant(0.0, 0.2, 200);
  auto after = evolve(s, b, kReference, g, 200);
  CHECK(total_vehicles(after, g) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("determinism") {
  const auto g = grid_of(5, 300.0, 5.0);
  DensityState s{{0.01, 0.05, 0.12, 0.02, 0.0}, 0.0};
  auto b = BoundarySeries::constant(0.03, 0.145, 50);
  CHECK(evolve(s, b, kReference, g, 50).density == evolve(s, b, kReference, g, 50).density);
}

TEST_CASE("Riemann problems: front positions against the Rankine-Hugoniot speed") {
  const auto g = grid_of(80, 300.0, 5.0);
  const std::size_t split = 20;
  const double T = 500.0;
  const auto n = static_cast<std::size_t>(T / g.time_step);
  const double x0 = static_cast<double>(split) * g.cell_length;

  SUBCASE("congested upstream, free downstream (mass-equivalent front)") {
    const double rl = 0.05, rr = 0.01;
    DensityState s;
    for (std::size_t i = 0; i < g.cells; ++i) s.density.push_back(i < split ? rl : rr);
    auto out = evolve(s, BoundarySeries::constant(rl, rr, n), kReference, g, n);
    const double predicted = x0 + kReference.shock_speed(rl, rr) * T;
    CHECK(std::abs(mass_front(out, g, rl, rr) - predicted) <= g.cell_length);
  }
  SUBCASE("free upstream, congested downstream (physical shock)") {
    const double rl = 0.01, rr = 0.05;
    DensityState s;
    for (std::size_t i = 0; i < g.cells; ++i) s.density.push_back(i < split ? rl : rr);
    auto out = evolve(s, BoundarySeries::constant(rl, rr, n), kReference, g, n);
    const double predicted = x0 + kReference.shock_speed(rl, rr) * T;
    CHECK(std::abs(crossing_front(out, g, 0.5 * (rl + rr)) - predicted) <= g.cell_length);
    CHECK(std::abs(mass_front(out, g, rl, rr) - predicted) <= g.cell_length);
  }
  SUBCASE("backward-moving queue shock") {
    const double rl = 0.02, rr = 0.145;
    DensityState s;
    for (std::size_t i = 0; i < g.cells; ++i) s.density.push_back(i < 60 ? rl : rr);
    auto out = evolve(s, BoundarySeries::constant(rl, rr, n), kReference, g, n);
    const double predicted = 60.0 * g.cell_length + kReference.shock_speed(rl, rr) * T;
    CHECK(kReference.shock_speed(rl, rr) < 0.0);
    CHECK(std::abs(crossing_front(out, g, 0.5 * (rl + rr)) - predicted) <= g.cell_length);
  }
}
