#include "hiercon/extensions.hpp"

#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

namespace hiercon {

void AbilityParams::validate() const {
  if (!(m >= 0.0) || !std::isfinite(m)) throw DomainError(fmt::format("ability m must be >= 0, got {}", m));
  if (!(m_tilde >= 0.0 && m_tilde < 1.0)) {
    throw DomainError(fmt::format("ability m_tilde must lie in [0, 1), got {}", m_tilde));
  }
}

FirmSpec apply_ability(const FirmSpec& firm, const AbilityParams& ability) {
  firm.validate();
  ability.validate();
  if (firm.agents.empty()) throw DomainError("manager ability needs at least one agent (m/n)");
  FirmSpec out = firm;
  const double boost = 1.0 + ability.m / static_cast<double>(firm.agents.size());
  for (auto& a : out.agents) a.k *= boost;
  out.manager.k *= 1.0 - ability.m_tilde;
  return out;
}

// --- profit and cost reporting ----------------------------------------------

double pc_curvature(const RatePC& r, const WorkerParams& agent) {
  return effective_risk(agent) * r.z2 + agent.sigma * agent.sigma * r.gamma22;
}

bool is_admissible_pc(const RatePC& r, const FirmSpec& firm) {
  for (const auto& a : firm.agents) {
    if (!(pc_curvature(r, a) < -kAdmissibilityEps)) return false;
  }
  return true;
}

double z_ipc(const RatePC& r, const WorkerParams& agent) {
  const double denom = pc_curvature(r, agent);
  if (!(denom < -kAdmissibilityEps)) {
    throw DomainError(fmt::format(
        "pc rate (z2={}, gamma22={}) is not admissible for agent (k={}, R={}, sigma={}): "
        "R~ z2 + sigma^2 gamma22 = {}",
        r.z2, r.gamma22, agent.k, agent.R, agent.sigma, denom));
  }
  return -(agent.k * r.z1 + agent.sigma * agent.sigma * r.gamma12) / denom;
}

double h_ipc(const RatePC& r, const WorkerParams& agent, double manager_R) {
  const double zs = z_ipc(r, agent);
  const double exposure = r.z1 + r.z2 * zs;
  return agent.k * zs - 0.5 * effective_risk(agent) * zs * zs -
         0.5 * manager_R * agent.sigma * agent.sigma * exposure * exposure;
}

double pc_objective(const RatePC& r, const FirmSpec& firm) {
  const auto& m = firm.manager;
  double value = m.k * r.z1 - 0.5 * effective_risk(m) * r.z1 * r.z1;
  for (std::size_t i = 0; i < firm.agents.size(); ++i) {
    try {
      value += h_ipc(r, firm.agents[i], m.R);
    } catch (const DomainError& e) {
      throw DomainError(fmt::format("agent {}: {}", i + 1, e.what()));
    }
  }
  return value;
}

namespace {

const WorkerParams& common_agent(const FirmSpec& firm, std::string_view what) {
  if (firm.agents.empty()) throw DomainError(fmt::format("{} needs at least one agent", what));
  for (const auto& a : firm.agents) {
    if (!(a == firm.agents.front())) throw DomainError(fmt::format("{} needs identical agents", what));
  }
  return firm.agents.front();
}

}  // namespace

RatePC pc_dc_construction(const FirmSpec& firm, double gamma22) {
  firm.validate();
  const auto& a = common_agent(firm, "the direct-contracting construction");
  const auto& m = firm.manager;
  const double rt = effective_risk(a);
  const double rt0 = effective_risk(m);
  RatePC r;
  r.z1 = m.k / rt0;
  r.z2 = -m.k * rt / (a.k * rt0);
  r.gamma22 = gamma22;
  r.gamma12 = (m.k / rt0) * a.R - (a.k / rt) * gamma22;
  if (!is_admissible_pc(r, firm)) {
    throw DomainError(fmt::format("gamma22={} makes the construction inadmissible", gamma22));
  }
  return r;
}

PCResult solve_pc(const FirmSpec& firm) {
  firm.validate();
  double gamma_scale = 1.0;
  for (const auto& a : firm.agents) {
    gamma_scale = std::max(gamma_scale, effective_risk(a) / (a.sigma * a.sigma));
  }
  const double gamma_span = 8.0 * gamma_scale;

  opt::OptProblem p;
  p.box = {{-2.0, 2.0}, {-4.0, 4.0}, {-gamma_span, gamma_span}, {-gamma_span, gamma_span}};
  auto unpack = [](std::span<const double> x) { return RatePC{x[0], x[1], 0.0, x[2], x[3]}; };
  p.objective = [&firm, unpack](std::span<const double> x) { return pc_objective(unpack(x), firm); };
  p.feasible = [&firm, unpack](std::span<const double> x) {
    return is_admissible_pc(unpack(x), firm);
  };

  // Warm start: the net-benefit optimum embedded in the pc contract space.
  std::vector<opt::Point> starts;
  if (!firm.agents.empty()) {
    const auto nb = solve_two_level(firm, Regime::sophisticated);
    const opt::Point embedded{nb.z_b, -nb.z_b, -nb.gamma_b, nb.gamma_b};
    if (p.feasible(embedded)) starts.push_back(embedded);
  }
  auto report = opt::maximize_nd(p, starts);

  PCResult res;
  res.rate = unpack(report.argmax);
  for (const auto& a : firm.agents) res.agent_rates.push_back(z_ipc(res.rate, a));
  res.manager_effort = agent_best_effort(res.rate.z1, firm.manager);
  res.principal_value = report.value;
  res.diagnostics = std::move(report);
  return res;
}

// --- separate reporting -------------------------------------------------------

std::vector<double> separate_reporting_values(const FirmSpec& firm, SeparateVariant variant,
                                              std::span<const double> z1_seq) {
  firm.validate();
  for (std::size_t i = 0; i < z1_seq.size(); ++i) {
    if (!(z1_seq[i] > 0.0) || !std::isfinite(z1_seq[i])) {
      throw DomainError(fmt::format("sequence entry {} is {}; entries must be positive", i, z1_seq[i]));
    }
    if (i > 0 && !(z1_seq[i] < z1_seq[i - 1])) {
      throw DomainError("sequence must be strictly decreasing");
    }
  }

  const auto& m = firm.manager;
  const double manager_term = 0.5 * m.k * m.k / effective_risk(m);
  std::vector<double> values;
  values.reserve(z1_seq.size());

  if (variant == SeparateVariant::b0) {
    for (const double z1 : z1_seq) {
      double v = manager_term;
      for (const auto& a : firm.agents) v += h_ib({z1, 0.0}, a, m.R);
      values.push_back(v);
    }
    return values;
  }

  const auto& a = common_agent(firm, "the pc0 construction");
  const double rt = effective_risk(a);
  const double s2 = a.sigma * a.sigma;
  for (const double z2 : z1_seq) {
    RatePC r;
    r.z2 = z2;
    r.z1 = -(a.k / rt) * z2;
    r.gamma22 = -rt * (z2 + 1.0) / s2;
    r.gamma12 = -(a.k / rt) * (a.R * z2 + r.gamma22);
    double v = manager_term;
    for (const auto& agent : firm.agents) v += h_ipc(r, agent, m.R);
    values.push_back(v);
  }
  return values;
}

// --- three-level hierarchy ----------------------------------------------------

void OrgSpec::validate() const {
  top_manager.validate();
  if (teams.empty()) throw DomainError("an organization needs at least one team");
  for (const auto& t : teams) {
    t.manager.validate();
    for (const auto& a : t.agents) a.validate();
  }
  if (!(T > 0.0) || !std::isfinite(T)) throw DomainError(fmt::format("horizon must be positive, got {}", T));
}

std::size_t OrgSpec::worker_count() const {
  std::size_t n = 1;
  for (const auto& t : teams) n += 1 + t.agents.size();
  return n;
}

OrgSpec OrgSpec::identical(const WorkerParams& w, std::size_t teams, std::size_t agents_per_team,
                           double T) {
  OrgSpec org;
  org.top_manager = w;
  org.teams.assign(teams, Team{w, std::vector<WorkerParams>(agents_per_team, w)});
  org.T = T;
  return org;
}

double h0j(const RateQV& rate, const Team& team) {
  const auto& mj = team.manager;
  double v = mj.k * rate.z - 0.5 * effective_risk(mj) * rate.z * rate.z;
  for (const auto& a : team.agents) v += h_ib(rate, a, mj.R);
  return v;
}

double gamma_j_star(double z_j, double z, double gamma, const Team& team) {
  const double shortfall = 1.0 - z_j;
  return -team.manager.R * z_j * z_j * z_j + (gamma / z) * z_j * shortfall * shortfall;
}

namespace {

double team_vol_factor(const Team& team, std::span<const double> agent_rates) {
  double v = team.manager.sigma * team.manager.sigma;
  for (std::size_t i = 0; i < team.agents.size(); ++i) {
    const double s = 1.0 - agent_rates[i];
    v += team.agents[i].sigma * team.agents[i].sigma * s * s;
  }
  return v;
}

bool team_admissible(const RateQV& rate, const Team& team) {
  for (const auto& a : team.agents) {
    if (!(admissibility_margin(rate, a) > kAdmissibilityEps)) return false;
  }
  return true;
}

void fill_team(TeamSolution& s, double z, double gamma, const Team& team) {
  const RateQV rate{s.z_j, s.gamma_j};
  s.agent_rates.clear();
  for (const auto& a : team.agents) s.agent_rates.push_back(z_ib(rate, a));
  s.h0j = h0j(rate, team);
  s.vol_factor = team_vol_factor(team, s.agent_rates);
  s.inner_value = team_bracket(s.z_j, s.gamma_j, z, gamma, team);
}

void require_positive_z(double z) {
  if (!(z > 0.0)) throw DomainError(fmt::format("top-manager rate z must be positive, got {}", z));
}

}  // namespace

double team_bracket(double z_j, double gamma_j, double z, double gamma, const Team& team) {
  const RateQV rate{z_j, gamma_j};
  std::vector<double> rates;
  rates.reserve(team.agents.size());
  for (const auto& a : team.agents) rates.push_back(z_ib(rate, a));
  const double shortfall = 1.0 - z_j;
  return z * h0j(rate, team) + 0.5 * gamma * shortfall * shortfall * team_vol_factor(team, rates);
}

TeamSolution three_level_inner(double z, double gamma, const Team& team) {
  require_positive_z(z);
  auto solve_on = [&](double upper) {
    opt::OptProblem p;
    p.box = {{1e-8, upper}};
    p.objective = [&](std::span<const double> x) {
      return team_bracket(x[0], gamma_j_star(x[0], z, gamma, team), z, gamma, team);
    };
    p.feasible = [&](std::span<const double> x) {
      return team_admissible({x[0], gamma_j_star(x[0], z, gamma, team)}, team);
    };
    return opt::maximize_1d(p);
  };

  auto report = solve_on(1.5);
  if (report.on_boundary && report.argmax[0] > 1.0) report = solve_on(3.0);
  if (report.on_boundary) {
    throw InfeasibleError(fmt::format(
        "team problem at (z={}, gamma={}) has no interior maximizer (z_j={})", z, gamma, report.argmax[0]));
  }

  TeamSolution s;
  s.z_j = report.argmax[0];
  s.gamma_j = gamma_j_star(s.z_j, z, gamma, team);
  s.diagnostics = std::move(report);
  fill_team(s, z, gamma, team);
  return s;
}

TeamSolution three_level_inner_joint(double z, double gamma, const Team& team) {
  require_positive_z(z);
  const double gamma_span = 4.0 * team.manager.R * std::pow(1.5, 3) + 4.0 * std::abs(gamma / z);
  opt::OptProblem p;
  p.box = {{1e-8, 1.5}, {-gamma_span, gamma_span}};
  p.objective = [&](std::span<const double> x) { return team_bracket(x[0], x[1], z, gamma, team); };
  p.feasible = [&](std::span<const double> x) { return team_admissible({x[0], x[1]}, team); };
  const std::vector<opt::Point> starts{{team.manager.k / effective_risk(team.manager), 0.0}};
  auto report = opt::maximize_nd(p, starts);

  TeamSolution s;
  s.z_j = report.argmax[0];
  s.gamma_j = report.argmax[1];
  s.diagnostics = std::move(report);
  fill_team(s, z, gamma, team);
  return s;
}

double ThreeLevelResult::mean_agent_rate() const {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& t : teams) {
    sum = std::accumulate(t.agent_rates.begin(), t.agent_rates.end(), sum);
    count += t.agent_rates.size();
  }
  return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(count);
}

double ThreeLevelResult::mean_manager_rate() const {
  double sum = 0.0;
  for (const auto& t : teams) sum += t.z_j;
  return teams.empty() ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(teams.size());
}

namespace {

double outer_value(double z, const OrgSpec& org, std::span<const TeamSolution> teams) {
  const auto& top = org.top_manager;
  double v = top.k * z - 0.5 * effective_risk(top) * z * z;
  for (const auto& t : teams) {
    const double shortfall = 1.0 - t.z_j;
    v += t.h0j - 0.5 * top.R * z * z * shortfall * shortfall * t.vol_factor;
  }
  return v;
}

/// Rounds to 12 significant digits for the memo key.
double memo_round(double x) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  const double scale = std::pow(10.0, 11 - static_cast<int>(std::floor(std::log10(std::abs(x)))));
  return std::round(x * scale) / scale;
}

/// Per-solve cache of inner team solutions keyed on rounded (z, gamma).
class InnerCache {
 public:
  explicit InnerCache(const OrgSpec& org) : org_(org) {}

  /// Empty when some team has no admissible interior optimum.
  const std::vector<TeamSolution>* get(double z, double gamma) {
    const auto key = std::make_pair(memo_round(z), memo_round(gamma));
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      std::vector<TeamSolution> sols;
      try {
        for (const auto& team : org_.teams) sols.push_back(three_level_inner(key.first, key.second, team));
      } catch (const InfeasibleError&) {
        sols.clear();
      }
      it = cache_.emplace(key, std::move(sols)).first;
    }
    return it->second.empty() ? nullptr : &it->second;
  }

 private:
  const OrgSpec& org_;
  std::map<std::pair<double, double>, std::vector<TeamSolution>> cache_;
};

}  // namespace

double three_level_objective(double z, double gamma, const OrgSpec& org) {
  std::vector<TeamSolution> teams;
  for (const auto& team : org.teams) teams.push_back(three_level_inner(z, gamma, team));
  return outer_value(z, org, teams);
}

ThreeLevelResult solve_three_level(const OrgSpec& org) {
  org.validate();
  InnerCache cache(org);
  const double R0 = org.top_manager.R;
  const double gamma_span = 4.0 * R0 * std::pow(1.5, 3);

  opt::OptProblem p;
  p.box = {{1e-8, 1.5}, {-gamma_span, gamma_span}};
  p.objective = [&](std::span<const double> x) {
    const auto* teams = cache.get(x[0], x[1]);
    if (teams == nullptr) return -std::numeric_limits<double>::infinity();
    return outer_value(x[0], org, *teams);
  };
  p.feasible = [&](std::span<const double> x) { return x[0] > 0.0 && cache.get(x[0], x[1]) != nullptr; };

  const std::vector<opt::Point> starts{{org.top_manager.k / effective_risk(org.top_manager), 0.0}};
  auto report = opt::maximize_nd(p, starts);

  ThreeLevelResult res;
  res.z = report.argmax[0];
  res.gamma = report.argmax[1];
  res.top_effort = agent_best_effort(res.z, org.top_manager);
  res.teams = *cache.get(res.z, res.gamma);
  res.principal_value = report.value;
  res.diagnostics = std::move(report);
  return res;
}

}  // namespace hiercon
