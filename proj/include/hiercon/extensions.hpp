#pragma once

#include <span>
#include <vector>

#include "hiercon/model.hpp"
#include "hiercon/optimizer.hpp"
#include "hiercon/two_level.hpp"

namespace hiercon {

// ---------------------------------------------------------------------------
// Manager ability

/// `m` lowers every agent's effort cost, `m_tilde` raises the manager's.
struct AbilityParams {
  double m = 0.0;
  double m_tilde = 0.0;

  void validate() const;
};

/// Agent productivities scaled by (1 + m/n), the manager's by (1 - m_tilde).
FirmSpec apply_ability(const FirmSpec& firm, const AbilityParams& ability);

// ---------------------------------------------------------------------------
// Reporting of total profit and total cost

/// Rates on the reported pair (total profit, total agent compensation).
/// gamma11 never enters the principal's objective and is carried only for
/// completeness of the contract.
struct RatePC {
  double z1 = 0.0;
  double z2 = 0.0;
  double gamma11 = 0.0;
  double gamma12 = 0.0;
  double gamma22 = 0.0;
};

/// R~ z2 + sigma^2 gamma22 for one agent. The manager's choice of the agent
/// rate is a strict maximum only when this is negative.
double pc_curvature(const RatePC& r, const WorkerParams& agent);

bool is_admissible_pc(const RatePC& r, const FirmSpec& firm);

/// -(k z1 + sigma^2 gamma12) / (R~ z2 + sigma^2 gamma22).
double z_ipc(const RatePC& r, const WorkerParams& agent);

double h_ipc(const RatePC& r, const WorkerParams& agent, double manager_R);

/// k0 z1 - R~0 z1^2 / 2 + sum_i h_ipc(r, agent_i, R0).
double pc_objective(const RatePC& r, const FirmSpec& firm);

/// The rates that reproduce direct contracting when all agents are
/// identical, for a free gamma22 (which must keep the rates admissible).
RatePC pc_dc_construction(const FirmSpec& firm, double gamma22);

struct PCResult {
  RatePC rate;
  std::vector<double> agent_rates;
  double manager_effort = 0.0;
  double principal_value = 0.0;
  opt::OptReport diagnostics;
};

/// Maximizes pc_objective over (z1, z2, gamma12, gamma22). The optimum is
/// generally not unique; only the value is meaningful.
PCResult solve_pc(const FirmSpec& firm);

// ---------------------------------------------------------------------------
// Separate reporting of the manager's own output

enum class SeparateVariant {
  /// Net benefit of the agents plus the manager's output.
  b0,
  /// Total profit and cost of the agents plus the manager's output.
  pc0,
};

/// Principal values along a sequence of contracts. For b0 each entry is the
/// rate on the agents' net benefit; for pc0 it is the free rate on reported
/// cost in the exact construction (identical agents only).
std::vector<double> separate_reporting_values(const FirmSpec& firm, SeparateVariant variant,
                                              std::span<const double> z1_seq);

// ---------------------------------------------------------------------------
// Three-level hierarchy

struct Team {
  WorkerParams manager;
  std::vector<WorkerParams> agents;
};

struct OrgSpec {
  WorkerParams top_manager;
  std::vector<Team> teams;
  double T = 1.0;

  void validate() const;
  std::size_t worker_count() const;
  /// Top manager plus `teams` identical teams of `agents_per_team` agents.
  static OrgSpec identical(const WorkerParams& w, std::size_t teams, std::size_t agents_per_team,
                           double T = 1.0);
};

/// kj z - R~j z^2 / 2 + sum_i h_ib((z, gamma), agent_i, Rj): what team j
/// delivers upward when its manager is paid (z, gamma).
double h0j(const RateQV& rate, const Team& team);

/// The top manager's optimal contract for one team given his own rates
/// (z, gamma).
struct TeamSolution {
  double z_j = 0.0;
  double gamma_j = 0.0;
  std::vector<double> agent_rates;
  double h0j = 0.0;
  /// sigma_j^2 + sum_i sigma_ji^2 (1 - z_ji)^2.
  double vol_factor = 0.0;
  /// Value of the top manager's bracketed term at the optimum.
  double inner_value = 0.0;
  opt::OptReport diagnostics;
};

/// gamma_j = -Rj z_j^3 + (gamma / z) z_j (1 - z_j)^2.
double gamma_j_star(double z_j, double z, double gamma, const Team& team);

/// z h0j(z_j, gamma_j) + gamma (1 - z_j)^2 vol_factor / 2, the quantity the
/// top manager maximizes for one team.
double team_bracket(double z_j, double gamma_j, double z, double gamma, const Team& team);

/// 1-D search over z_j with gamma_j eliminated by its first-order condition.
/// Throws InfeasibleError when no admissible interior maximizer exists.
TeamSolution three_level_inner(double z, double gamma, const Team& team);

/// Joint search over (z_j, gamma_j); cross-check for three_level_inner.
TeamSolution three_level_inner_joint(double z, double gamma, const Team& team);

struct ThreeLevelResult {
  double z = 0.0;
  double gamma = 0.0;
  double top_effort = 0.0;
  std::vector<TeamSolution> teams;
  /// Per unit time.
  double principal_value = 0.0;
  opt::OptReport diagnostics;

  double mean_agent_rate() const;
  double mean_manager_rate() const;
};

/// Principal objective at top-manager rates (z, gamma), with the inner team
/// problems solved.
double three_level_objective(double z, double gamma, const OrgSpec& org);

ThreeLevelResult solve_three_level(const OrgSpec& org);

}  // namespace hiercon
