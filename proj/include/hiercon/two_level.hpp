#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "hiercon/model.hpp"
#include "hiercon/optimizer.hpp"

namespace hiercon {

enum class Regime { sophisticated, linear, direct };

std::string_view to_string(Regime r);
Regime parse_regime(std::string_view name);

/// How the principal's quadratic-variation rate depends on z.
struct GammaRule {
  enum class Kind { cubic, square, fixed };
  Kind kind = Kind::cubic;
  double value = 0.0;

  /// gamma = -R0 z^3, the optimal choice.
  static GammaRule cubic() { return {Kind::cubic, 0.0}; }
  /// gamma = -R0 z^2, i.e. a contract linear in the net benefit.
  static GammaRule square() { return {Kind::square, 0.0}; }
  static GammaRule fixed(double gamma) { return {Kind::fixed, gamma}; }

  double operator()(double z, double manager_R) const;
};

GammaRule rule_for(Regime r);

struct SolveResult {
  Regime regime = Regime::sophisticated;
  double z_b = 0.0;
  double gamma_b = 0.0;
  std::vector<double> agent_rates;
  double manager_effort = 0.0;
  std::vector<double> agent_efforts;
  /// Per unit time; multiply by T for the horizon value.
  double principal_value = 0.0;
  std::optional<ContractQV> manager_contract;
  std::vector<AgentContract> agent_contracts;
  opt::OptReport diagnostics;
  /// Relative gap between the objective value and the value rebuilt from the
  /// drifts of zeta and of the manager's contract.
  double value_crosscheck = 0.0;

  double principal_value_per_worker() const {
    return principal_value / static_cast<double>(agent_rates.size() + 1);
  }
  double mean_agent_rate() const;
  double mean_agent_effort() const;
};

/// k0 z - R~0 z^2 / 2 + sum_i h_ib((z, gamma(z)), agent_i, R0).
double principal_objective(double z, const FirmSpec& firm, const GammaRule& rule);

/// Principal's expected payoff rate rebuilt from the drift of zeta minus the
/// drift of the manager's contract, given the manager rate and agent rates.
double principal_value_from_dynamics(double z, std::span<const double> agent_rates,
                                     const FirmSpec& firm);

struct TwoLevelOptions {
  double z_lower = 1e-8;
  double z_upper = 1.5;
  /// Upper bound used for the single retry after a boundary hit.
  double z_upper_retry = 3.0;
};

SolveResult solve_two_level(const FirmSpec& firm, Regime regime, const TwoLevelOptions& options = {});

/// Maximizes the principal objective jointly over (z, gamma) without the
/// analytic gamma substitution. Cross-check for the sophisticated regime.
SolveResult solve_two_level_joint(const FirmSpec& firm, const TwoLevelOptions& options = {});

/// Populates a result at given manager rates (z, gamma) without optimizing;
/// `regime` only labels the result and must not be direct.
SolveResult evaluate_rates(const FirmSpec& firm, const RateQV& rate, Regime regime);

struct Contracts {
  ContractQV manager;
  std::vector<AgentContract> agents;
};

/// Explicit contracts for a solved sophisticated or linear instance.
Contracts build_contracts(const SolveResult& res, const FirmSpec& firm);

/// Linear contract paying `z` per unit of output to a worker, with the fixed
/// part saturating a reservation utility of -1.
AgentContract agent_contract(double z, const WorkerParams& w);

}  // namespace hiercon
