#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "hiercon/extensions.hpp"
#include "hiercon/two_level.hpp"
#include "oracles.hpp"

using namespace hiercon;

namespace {

const WorkerParams kBase{1000.0, 50.0, 1.0};
constexpr double kDcValue = 0.5 * 1000.0 * 1000.0 / 1050.0;

double dc_total(const FirmSpec& f) { return kDcValue * static_cast<double>(f.worker_count()); }

}  // namespace

// --- ability -----------------------------------------------------------------

TEST_CASE("ability reparameterization") {
  const auto firm = FirmSpec::identical(kBase, 10);
  const auto same = apply_ability(firm, {0.0, 0.0});
  CHECK(same.manager == firm.manager);
  CHECK(same.agents == firm.agents);

  const auto adj = apply_ability(firm, {0.6, 0.1});
  CHECK(adj.agents[3].k == doctest::Approx(1060.0));
  CHECK(adj.manager.k == doctest::Approx(900.0));
  CHECK(adj.agents[3].R == kBase.R);
  CHECK(adj.manager.sigma == kBase.sigma);

  CHECK_THROWS_AS(apply_ability(FirmSpec::identical(kBase, 0), {0.6, 0.1}), DomainError);
  CHECK_THROWS_AS(apply_ability(firm, {-0.1, 0.1}), DomainError);
  CHECK_THROWS_AS(apply_ability(firm, {0.6, 1.0}), DomainError);
}

TEST_CASE("ability beats direct contracting at (0.6, 0.1)") {
  for (int total : {5, 10, 20, 30}) {
    const auto firm = apply_ability(FirmSpec::identical(kBase, total - 1), {0.6, 0.1});
    const auto r = solve_two_level(firm, Regime::sophisticated);
    CHECK(r.principal_value_per_worker() > kDcValue);
  }
}

TEST_CASE("ability value is monotone in m and m_tilde") {
  const auto firm = FirmSpec::identical(kBase, 9);
  const std::vector<double> ms{0.0, 0.25, 0.5, 0.75, 1.0};
  const std::vector<double> mts{0.0, 0.1, 0.2, 0.3, 0.4};
  std::vector<std::vector<double>> v(5, std::vector<double>(5));
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      v[i][j] = solve_two_level(apply_ability(firm, {ms[i], mts[j]}), Regime::sophisticated).principal_value;
    }
  }
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      if (i > 0) CHECK(v[i][j] >= v[i - 1][j]);
      if (j > 0) CHECK(v[i][j] <= v[i][j - 1]);
    }
  }
}

// --- profit and cost reporting ----------------------------------------------

TEST_CASE("pc construction attains direct contracting") {
  for (int n : {1, 3, 10}) {
    const auto firm = FirmSpec::identical(kBase, n);
    const auto r = pc_dc_construction(firm, -2000.0);
    CHECK(r.z1 == doctest::Approx(20.0 / 21.0).epsilon(1e-14));
    CHECK(r.z2 == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(r.gamma12 == doctest::Approx(1952.380952381).epsilon(1e-12));
    CHECK(pc_objective(r, firm) == doctest::Approx(dc_total(firm)).epsilon(1e-12));
    for (double zi : {z_ipc(r, firm.agents[0])}) CHECK(zi == doctest::Approx(20.0 / 21.0).epsilon(1e-12));
  }
}

TEST_CASE("pc admissibility follows the manager's concavity") {
  const auto firm = FirmSpec::identical(kBase, 1);
  // R~ z2 + sigma^2 gamma22 must be negative.
  RatePC r{0.5, -1.0, 0.0, 10.0, 1049.0};
  CHECK(pc_curvature(r, kBase) == doctest::Approx(-1.0));
  CHECK(is_admissible_pc(r, firm));
  r.gamma22 = 1051.0;
  CHECK_FALSE(is_admissible_pc(r, firm));
  CHECK_THROWS_AS(z_ipc(r, kBase), DomainError);
  CHECK_THROWS_AS(pc_objective(r, firm), DomainError);
  CHECK_THROWS_AS(pc_dc_construction(firm, 1100.0), DomainError);

  // z_ipc maximizes the manager's per-agent term
  //   z1 (k y) + z2 (k y - c) ... written as a y - b y^2 / 2 with b > 0.
  const RatePC q{0.7, -0.8, 0.0, 30.0, -200.0};
  auto term = [&](double y) {
    const double s2 = kBase.sigma * kBase.sigma;
    const double rt = effective_risk(kBase);
    return (kBase.k * q.z1 + s2 * q.gamma12) * y + 0.5 * (rt * q.z2 + s2 * q.gamma22) * y * y;
  };
  CHECK(z_ipc(q, kBase) == doctest::Approx(oracle::grid_max_1d(term, -5.0, 5.0).first).epsilon(1e-6));
}

TEST_CASE("net-benefit reporting embeds in pc reporting") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> zd(0.05, 1.4), gd(-80.0, 0.0);
  for (int i = 0; i < 10; ++i) {
    FirmSpec firm;
    const auto m = oracle::random_worker(rng);
    firm.manager = {m.k, m.R, m.sigma};
    for (int a = 0; a < 3; ++a) {
      const auto w = oracle::random_worker(rng);
      firm.agents.push_back({w.k, w.R, w.sigma});
    }
    const double z = zd(rng), g = gd(rng);
    const RatePC r{z, -z, 0.0, -g, g};
    CHECK(pc_objective(r, firm) ==
          doctest::Approx(principal_objective(z, firm, GammaRule::fixed(g))).epsilon(1e-12));
  }
}

TEST_CASE("pc objective with zero rates") {
  const auto firm = FirmSpec::identical(kBase, 2);
  const RatePC r{0.0, 0.0, 0.0, 0.0, -1.0};
  CHECK(pc_objective(r, firm) == 0.0);
}

TEST_CASE("solve_pc") {
  for (int n : {1, 3, 5, 10}) {
    const auto firm = FirmSpec::identical(kBase, n);
    const auto r = solve_pc(firm);
    CHECK(r.principal_value == doctest::Approx(dc_total(firm)).epsilon(1e-6));
    CHECK(r.principal_value >= solve_two_level(firm, Regime::sophisticated).principal_value);
  }
  const auto solo = solve_pc(FirmSpec::identical(kBase, 0));
  CHECK(solo.principal_value == doctest::Approx(kDcValue).epsilon(1e-9));

  FirmSpec het;
  het.manager = kBase;
  het.agents = {{800.0, 20.0, 1.5}, {1500.0, 70.0, 0.5}};
  const auto r = solve_pc(het);
  const auto nb = solve_two_level(het, Regime::sophisticated);
  CHECK(r.principal_value >= nb.principal_value * (1 - 1e-9));
}

// --- separate reporting ------------------------------------------------------

TEST_CASE("separate reporting b0 converges up to direct contracting") {
  const auto firm = FirmSpec::identical(kBase, 2);
  const std::vector<double> seq{1.0, 0.1, 0.01, 0.001};
  const auto v = separate_reporting_values(firm, SeparateVariant::b0, seq);
  REQUIRE(v.size() == seq.size());
  const double y = 1000.0 / 1050.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double z = seq[i];
    const double expected = 3 * kDcValue - 2 * 0.5 * 50.0 * z * z * (1 - y) * (1 - y);
    CHECK(v[i] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(v[i] < dc_total(firm));
    if (i > 0) CHECK(v[i] > v[i - 1]);
  }
  CHECK(v.back() == doctest::Approx(1428.5714285714).epsilon(1e-8));
}

TEST_CASE("separate reporting pc0 attains direct contracting exactly") {
  const auto firm = FirmSpec::identical(kBase, 4);
  const std::vector<double> seq{2.0, 1.0, 0.3};
  for (double v : separate_reporting_values(firm, SeparateVariant::pc0, seq)) {
    CHECK(v == doctest::Approx(dc_total(firm)).epsilon(1e-12));
  }
  FirmSpec het = firm;
  het.agents[0].k = 900.0;
  CHECK_THROWS_AS(separate_reporting_values(het, SeparateVariant::pc0, seq), DomainError);
}

TEST_CASE("separate reporting rejects bad sequences") {
  const auto firm = FirmSpec::identical(kBase, 2);
  const std::vector<double> zero{1.0, 0.0};
  const std::vector<double> up{0.1, 0.2};
  CHECK_THROWS_AS(separate_reporting_values(firm, SeparateVariant::b0, zero), DomainError);
  CHECK_THROWS_AS(separate_reporting_values(firm, SeparateVariant::b0, up), DomainError);
}

// --- three-level hierarchy ---------------------------------------------------

TEST_CASE("inner problem with gamma = 0 is the team's two-level problem") {
  const Team team{kBase, {kBase, kBase}};
  FirmSpec flat;
  flat.manager = team.manager;
  flat.agents = team.agents;
  const auto two = solve_two_level(flat, Regime::sophisticated);
  for (double z : {0.3, 0.9}) {
    const auto s = three_level_inner(z, 0.0, team);
    CHECK(s.z_j == doctest::Approx(two.z_b).epsilon(1e-8));
    CHECK(s.gamma_j == doctest::Approx(-50.0 * s.z_j * s.z_j * s.z_j).epsilon(1e-14));
    CHECK(s.inner_value == doctest::Approx(z * two.principal_value).epsilon(1e-12));
  }
}

TEST_CASE("gamma_j formula is the gamma_j first-order condition") {
  const Team team{kBase, {kBase, kBase}};
  for (auto [z, g] : {std::pair{0.5, -1.0}, std::pair{0.9, -30.0}, std::pair{0.95, -43.0}}) {
    const auto s = three_level_inner(z, g, team);
    const opt::Objective in_gamma = [&](std::span<const double> x) {
      return team_bracket(s.z_j, x[0], z, g, team);
    };
    const std::vector<double> at{s.gamma_j};
    CHECK(opt::foc_residual(in_gamma, at, 1e-5) < opt::foc_threshold(s.inner_value));
    const auto joint = three_level_inner_joint(z, g, team);
    CHECK(joint.inner_value == doctest::Approx(s.inner_value).epsilon(1e-8));
  }
}

TEST_CASE("inner solve against a 2-D grid oracle") {
  const Team team{kBase, {kBase, kBase}};
  const double z = 0.5, g = -1.0;
  auto f = [&](double zj, double gj) {
    for (const auto& a : team.agents) {
      if (!(admissibility_margin({zj, gj}, a) > 1e-12)) return -std::numeric_limits<double>::infinity();
    }
    // Bracket written out from the definition.
    double h = oracle::two_level_objective(zj, gj, oracle::kBase, oracle::kBase, 2);
    double vol = 1.0;
    for (int i = 0; i < 2; ++i) {
      const double y = oracle::agent_rate(zj, gj, oracle::kBase);
      vol += (1 - y) * (1 - y);
    }
    return z * h + 0.5 * g * (1 - zj) * (1 - zj) * vol;
  };
  const auto [arg, best] = oracle::grid_max_2d(f, 1e-3, 1.5, -200.0, 200.0);
  const auto s = three_level_inner(z, g, team);
  CHECK(std::abs(s.inner_value - best) < 1e-5);
  CHECK(s.z_j == doctest::Approx(arg.first).epsilon(1e-4));
}

TEST_CASE("team without agents has a closed-form maximizer") {
  const Team team{{800.0, 20.0, 1.5}, {}};
  for (auto [z, g] : {std::pair{0.5, -1.0}, std::pair{0.8, -20.0}}) {
    const double s2 = 1.5 * 1.5;
    const double expected = (z * 800.0 - g * s2) / (z * effective_risk(team.manager) - g * s2);
    CHECK(three_level_inner(z, g, team).z_j == doctest::Approx(expected).epsilon(1e-8));
  }
}

TEST_CASE("three-level solve") {
  const auto org = OrgSpec::identical(kBase, 2, 2);
  CHECK(org.worker_count() == 7);
  const auto r = solve_three_level(org);
  CHECK(r.diagnostics.converged);
  const opt::Objective f = [&](std::span<const double> x) { return three_level_objective(x[0], x[1], org); };
  const std::vector<double> at{r.z, r.gamma};
  CHECK(opt::foc_residual(f, at, 1e-5) < opt::foc_threshold(r.principal_value));
  // The top manager's QV rate aligns incentives exactly as in two levels.
  CHECK(r.gamma == doctest::Approx(-50.0 * r.z * r.z * r.z).epsilon(1e-5));
  CHECK(r.principal_value == doctest::Approx(three_level_objective(r.z, r.gamma, org)).epsilon(1e-12));
  CHECK(r.mean_agent_rate() > 0.0);
  CHECK(r.mean_manager_rate() < 1.0);
  CHECK_THROWS_AS(OrgSpec{}.validate(), DomainError);
}

TEST_CASE("one team is worse than the same workers in two levels") {
  const auto org = OrgSpec::identical(kBase, 1, 3);
  const auto three = solve_three_level(org);
  const auto two = solve_two_level(FirmSpec::identical(kBase, 4), Regime::sophisticated);
  CHECK(three.principal_value <= two.principal_value);
}

TEST_CASE("teams without agents collapse to two levels") {
  const auto org = OrgSpec::identical(kBase, 3, 0);
  const auto three = solve_three_level(org);
  const auto two = solve_two_level(FirmSpec::identical(kBase, 3), Regime::sophisticated);
  CHECK(three.principal_value == doctest::Approx(two.principal_value).epsilon(1e-8));
  CHECK(three.z == doctest::Approx(two.z_b).epsilon(1e-5));
}
