#include "hiercon/two_level.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace hiercon {

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::sophisticated: return "sophisticated";
    case Regime::linear: return "linear";
    case Regime::direct: return "direct";
  }
  return "unknown";
}

Regime parse_regime(std::string_view name) {
  if (name == "sophisticated") return Regime::sophisticated;
  if (name == "linear") return Regime::linear;
  if (name == "direct" || name == "dc") return Regime::direct;
  throw DomainError(fmt::format("unknown regime '{}'", name));
}

double GammaRule::operator()(double z, double manager_R) const {
  switch (kind) {
    case Kind::cubic: return -manager_R * z * z * z;
    case Kind::square: return -manager_R * z * z;
    case Kind::fixed: return value;
  }
  return value;
}

GammaRule rule_for(Regime r) {
  switch (r) {
    case Regime::sophisticated: return GammaRule::cubic();
    case Regime::linear: return GammaRule::square();
    case Regime::direct: break;
  }
  throw DomainError("the direct regime has no gamma rule");
}

double SolveResult::mean_agent_rate() const {
  if (agent_rates.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(agent_rates.begin(), agent_rates.end(), 0.0) /
         static_cast<double>(agent_rates.size());
}

double SolveResult::mean_agent_effort() const {
  if (agent_efforts.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(agent_efforts.begin(), agent_efforts.end(), 0.0) /
         static_cast<double>(agent_efforts.size());
}

double principal_objective(double z, const FirmSpec& firm, const GammaRule& rule) {
  const auto& m = firm.manager;
  const RateQV rate{z, rule(z, m.R)};
  double value = m.k * z - 0.5 * effective_risk(m) * z * z;
  for (const auto& a : firm.agents) value += h_ib(rate, a, m.R);
  return value;
}

double principal_value_from_dynamics(double z, std::span<const double> agent_rates,
                                     const FirmSpec& firm) {
  const auto& m = firm.manager;
  double zeta_drift = m.k * z;
  double zeta_var = m.sigma * m.sigma;
  for (std::size_t i = 0; i < firm.agents.size(); ++i) {
    const auto& a = firm.agents[i];
    const double zi = agent_rates[i];
    zeta_drift += a.k * zi - 0.5 * effective_risk(a) * zi * zi;
    zeta_var += a.sigma * a.sigma * (1.0 - zi) * (1.0 - zi);
  }
  const double contract_drift = 0.5 * z * z * (m.k + m.R * zeta_var);
  return zeta_drift - contract_drift;
}

AgentContract agent_contract(double z, const WorkerParams& w) {
  return {0.0, z, 0.5 * w.R * z * z, worker_hamiltonian(z, w)};
}

namespace {

void populate(SolveResult& res, const FirmSpec& firm) {
  const RateQV rate{res.z_b, res.gamma_b};
  res.agent_rates.clear();
  res.agent_efforts.clear();
  for (const auto& a : firm.agents) {
    const double zi = z_ib(rate, a);
    res.agent_rates.push_back(zi);
    res.agent_efforts.push_back(agent_best_effort(zi, a));
  }
  res.manager_effort = agent_best_effort(res.z_b, firm.manager);
  const double rebuilt = principal_value_from_dynamics(res.z_b, res.agent_rates, firm);
  res.value_crosscheck =
      std::abs(rebuilt - res.principal_value) / std::max(1.0, std::abs(res.principal_value));
  const auto contracts = build_contracts(res, firm);
  res.manager_contract = contracts.manager;
  res.agent_contracts = contracts.agents;
}

SolveResult solve_direct(const FirmSpec& firm) {
  std::vector<WorkerParams> workers{firm.manager};
  workers.insert(workers.end(), firm.agents.begin(), firm.agents.end());
  const auto dc = dc_solution(workers);

  SolveResult res;
  res.regime = Regime::direct;
  res.z_b = dc.rates.front();
  res.manager_effort = dc.efforts.front();
  res.agent_rates.assign(dc.rates.begin() + 1, dc.rates.end());
  res.agent_efforts.assign(dc.efforts.begin() + 1, dc.efforts.end());
  res.principal_value = dc.principal_value;
  for (std::size_t i = 0; i < firm.agents.size(); ++i) {
    res.agent_contracts.push_back(agent_contract(res.agent_rates[i], firm.agents[i]));
  }
  res.diagnostics.argmax = {res.z_b};
  res.diagnostics.value = res.principal_value;
  res.diagnostics.foc_residual = 0.0;
  res.diagnostics.converged = true;
  return res;
}

opt::OptReport maximize_over_z(const FirmSpec& firm, const GammaRule& rule, double lower,
                               double upper) {
  opt::OptProblem p;
  p.box = {{lower, upper}};
  p.objective = [&firm, rule](std::span<const double> x) {
    return principal_objective(x[0], firm, rule);
  };
  p.feasible = [&firm, rule](std::span<const double> x) {
    return is_admissible({x[0], rule(x[0], firm.manager.R)}, firm);
  };
  return opt::maximize_1d(p);
}

bool hit_upper(const opt::OptReport& r, double upper) {
  return r.on_boundary && upper - r.argmax[0] <= 1e-6 * upper;
}

}  // namespace

SolveResult solve_two_level(const FirmSpec& firm, Regime regime, const TwoLevelOptions& options) {
  firm.validate();
  if (regime == Regime::direct) return solve_direct(firm);

  const GammaRule rule = rule_for(regime);
  auto report = maximize_over_z(firm, rule, options.z_lower, options.z_upper);
  if (hit_upper(report, options.z_upper)) {
    report = maximize_over_z(firm, rule, options.z_lower, options.z_upper_retry);
  }

  SolveResult res;
  res.regime = regime;
  res.z_b = report.argmax[0];
  res.gamma_b = rule(res.z_b, firm.manager.R);
  res.principal_value = report.value;
  res.diagnostics = std::move(report);
  populate(res, firm);
  return res;
}

SolveResult solve_two_level_joint(const FirmSpec& firm, const TwoLevelOptions& options) {
  firm.validate();
  const double R0 = firm.manager.R;
  const double gamma_span = 4.0 * R0 * std::pow(options.z_upper, 3);

  opt::OptProblem p;
  p.box = {{options.z_lower, options.z_upper}, {-gamma_span, gamma_span}};
  p.objective = [&firm](std::span<const double> x) {
    return principal_objective(x[0], firm, GammaRule::fixed(x[1]));
  };
  p.feasible = [&firm](std::span<const double> x) { return is_admissible({x[0], x[1]}, firm); };

  const std::vector<opt::Point> starts{{firm.manager.k / effective_risk(firm.manager), 0.0}};
  auto report = opt::maximize_nd(p, starts);

  SolveResult res;
  res.regime = Regime::sophisticated;
  res.z_b = report.argmax[0];
  res.gamma_b = report.argmax[1];
  res.principal_value = report.value;
  res.diagnostics = std::move(report);
  populate(res, firm);
  return res;
}

SolveResult evaluate_rates(const FirmSpec& firm, const RateQV& rate, Regime regime) {
  firm.validate();
  if (regime == Regime::direct) throw DomainError("explicit rates need a net-benefit regime");
  SolveResult res;
  res.regime = regime;
  res.z_b = rate.z;
  res.gamma_b = rate.gamma;
  res.principal_value = principal_objective(rate.z, firm, GammaRule::fixed(rate.gamma));
  res.diagnostics.argmax = {rate.z, rate.gamma};
  res.diagnostics.value = res.principal_value;
  populate(res, firm);
  return res;
}

Contracts build_contracts(const SolveResult& res, const FirmSpec& firm) {
  if (res.regime == Regime::direct) {
    throw DomainError("direct contracting has no manager contract");
  }
  const auto& m = firm.manager;
  const RateQV rate{res.z_b, res.gamma_b};
  Contracts out;
  out.manager = {0.0, res.z_b, 0.5 * (res.gamma_b + m.R * res.z_b * res.z_b),
                 manager_hamiltonian(rate, firm)};
  for (const auto& a : firm.agents) out.agents.push_back(agent_contract(z_ib(rate, a), a));
  return out;
}

}  // namespace hiercon
