#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>

#include "hiercon/rng.hpp"
#include "hiercon/simulator.hpp"
#include "hiercon/two_level.hpp"

using namespace hiercon;

namespace {

const WorkerParams kBase{1000.0, 50.0, 1.0};
// Horizon at which the Euler bias of realized QV is negligible against the
// antithetic standard errors (see README).
constexpr double kShortT = 1e-8;

MCConfig small_cfg(std::size_t paths = 20000, std::size_t steps = 256) {
  MCConfig c;
  c.paths = paths;
  c.steps = steps;
  c.keep_paths = false;
  return c;
}

bool within(const Estimate& e, double target, double k = 3.0) { return std::abs(e.mean - target) <= k * e.se; }

}  // namespace

TEST_CASE("philox known-answer vectors") {
  using C = Philox4x32::Counter;
  CHECK(Philox4x32::block({0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::block({~0u, ~0u, ~0u, ~0u}, {~0u, ~0u}) == C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::block({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("normal substreams") {
  NormalStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  double sum = 0.0, sq = 0.0;
  bool differs_stream = false, differs_seed = false;
  for (int i = 0; i < 200000; ++i) {
    const double x = a.next();
    CHECK_EQ(x, b.next());
    differs_stream |= x != c.next();
    differs_seed |= x != d.next();
    sum += x;
    sq += x * x;
  }
  CHECK(differs_stream);
  CHECK(differs_seed);
  CHECK(std::abs(sum / 200000) < 0.01);
  CHECK(std::abs(sq / 200000 - 1.0) < 0.01);
}

TEST_CASE("realized quadratic variation") {
  const std::vector<double> flat(100, 0.0);
  CHECK(realized_qv(flat) == 0.0);
  const std::vector<double> inc{0.1, -0.2, 0.3};
  CHECK(realized_qv(inc) == doctest::Approx(0.14));

  // Pure diffusion: a lone worker with no contract and no effort.
  FirmSpec solo = FirmSpec::identical(kBase, 0);
  SimEfforts none;
  none.manager = 0.0;
  MCConfig cfg = small_cfg(1000, 10000);
  cfg.antithetic = false;
  const auto b = simulate(solo, {{0.0, 0.0}, {}}, none, cfg);
  CHECK(b.realized_qv.mean == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("zero contract gives utility exactly -1") {
  const auto firm = FirmSpec::identical(kBase, 2);
  SimEfforts none;
  none.manager = 0.0;
  none.agents = {0.0, 0.0};
  MCConfig cfg = small_cfg(64, 32);
  cfg.keep_paths = true;
  const auto b = simulate(firm, {{0.0, 0.0}, {0.0, 0.0}}, none, cfg);
  for (double u : b.utilities) CHECK(u == -1.0);
  for (double x : b.xi_agents) CHECK(x == 0.0);
  for (double x : b.xi_manager) CHECK(x == 0.0);
  for (double q : b.qv_zeta) CHECK(q >= 0.0);
  CHECK(b.flagged == 0);
  CHECK(b.x_T.size() == 64 * 3);
}

TEST_CASE("optimal contracts leave workers at their reservation utility") {
  const auto firm = FirmSpec::identical(kBase, 1, kShortT);
  const auto s = solve_two_level(firm, Regime::sophisticated);
  const auto b = simulate(firm, rates_from(s), {}, small_cfg());
  CHECK(b.flagged == 0);
  CHECK(within(b.manager_utility(), -1.0));
  CHECK(within(b.agent_utility(0), -1.0));
  CHECK(within(b.principal_payoff, kShortT * s.principal_value));
  const double y = s.agent_rates[0];
  CHECK(within(b.realized_qv, kShortT * (1.0 + (1 - y) * (1 - y))));
}

TEST_CASE("incentive compatibility") {
  const auto firm = FirmSpec::identical(kBase, 1, kShortT);
  const auto s = solve_two_level(firm, Regime::sophisticated);
  const auto cfg = small_cfg();
  const auto best = simulate(firm, rates_from(s), {}, cfg).agent_utility(0);
  const double a = agent_best_effort(s.agent_rates[0], kBase);
  for (double f : {0.0, 0.5, 0.75, 1.25, 2.0}) {
    SimEfforts dev;
    dev.agents = {f * a};
    const auto u = simulate(firm, rates_from(s), dev, cfg).agent_utility(0);
    CHECK(best.mean + 3 * best.se >= u.mean);
  }
  SimEfforts lazy;
  lazy.agents = {0.0};
  const auto u0 = simulate(firm, rates_from(s), lazy, cfg).agent_utility(0);
  CHECK(u0.mean < -1.0 + 3 * u0.se);
}

TEST_CASE("reproducible and thread-count independent") {
  const auto firm = FirmSpec::identical(kBase, 2, kShortT);
  const auto s = solve_two_level(firm, Regime::sophisticated);
  auto cfg = small_cfg(4001, 64);
  cfg.threads = 1;
  const auto a = simulate(firm, rates_from(s), {}, cfg);
  cfg.threads = 3;
  const auto b = simulate(firm, rates_from(s), {}, cfg);
  for (std::size_t w = 0; w < 3; ++w) {
    CHECK(a.worker_utility[w].mean == b.worker_utility[w].mean);
    CHECK(a.worker_utility[w].se == b.worker_utility[w].se);
  }
  CHECK(a.principal_payoff.mean == b.principal_payoff.mean);
  CHECK(a.realized_qv.se == b.realized_qv.se);
}

TEST_CASE("antithetic variates shrink the payoff variance") {
  const auto firm = FirmSpec::identical(kBase, 1, kShortT);
  const auto s = solve_two_level(firm, Regime::sophisticated);
  auto cfg = small_cfg();
  const auto anti = simulate(firm, rates_from(s), {}, cfg);
  cfg.antithetic = false;
  const auto plain = simulate(firm, rates_from(s), {}, cfg);
  CHECK(anti.principal_payoff.se < plain.principal_payoff.se);
  CHECK(within(plain.principal_payoff, anti.principal_payoff.mean, 4.0));
}

TEST_CASE("halving dt moves mean utilities by less than one standard error") {
  const auto firm = FirmSpec::identical(kBase, 1, kShortT);
  const auto s = solve_two_level(firm, Regime::sophisticated);
  auto fine = small_cfg(100000, 256);
  auto coarse = fine;
  coarse.steps = 128;
  coarse.refinement = 2;  // same Brownian paths as `fine`
  const auto f = simulate(firm, rates_from(s), {}, fine);
  const auto c = simulate(firm, rates_from(s), {}, coarse);
  for (std::size_t w = 0; w < 2; ++w) {
    CHECK(std::abs(f.worker_utility[w].mean - c.worker_utility[w].mean) < f.worker_utility[w].se);
  }
}

TEST_CASE("overflowing paths are flagged and excluded") {
  const auto firm = FirmSpec::identical(kBase, 1, 2000.0);
  const auto s = solve_two_level(firm, Regime::sophisticated);
  const auto b = simulate(firm, rates_from(s), {}, small_cfg(200, 16));
  CHECK(b.flagged > 0);
  CHECK(b.flagged <= b.paths);
}

TEST_CASE("input validation") {
  const auto firm = FirmSpec::identical(kBase, 1);
  const auto cfg = small_cfg(10, 4);
  CHECK_THROWS_AS(simulate(firm, {{0.5, -6.0}, {}}, {}, cfg), DomainError);
  CHECK_THROWS_AS(simulate(firm, {{0.5, 600.0}, {0.9}}, {}, cfg), DomainError);
  SimEfforts two;
  two.agents = {1.0, 2.0};
  CHECK_THROWS_AS(simulate(firm, {{0.5, -6.0}, {0.9}}, two, cfg), DomainError);
  MCConfig bad = cfg;
  bad.paths = 0;
  CHECK_THROWS_AS(simulate(firm, {{0.5, -6.0}, {0.9}}, {}, bad), DomainError);
  CHECK_THROWS_AS(rates_from(solve_two_level(firm, Regime::direct)), DomainError);
}

TEST_CASE("thread count") {
  CHECK(thread_count(5) == 5);
  ::setenv("HIERCON_THREADS", "3", 1);
  CHECK(thread_count() == 3);
  ::setenv("HIERCON_THREADS", "many", 1);
  CHECK_THROWS_AS(thread_count(), DomainError);
  ::unsetenv("HIERCON_THREADS");
  CHECK(thread_count() >= 1);
}
