#pragma once

#include <span>
#include <vector>

#include "hiercon/errors.hpp"

namespace hiercon {

/// Expressions closer to zero than this are treated as the boundary of an
/// admissible set.
inline constexpr double kAdmissibilityEps = 1e-12;

/// Productivity k, CARA risk aversion R and output volatility sigma of one
/// worker. Effort a costs a^2 / (2k).
struct WorkerParams {
  double k = 1.0;
  double R = 1.0;
  double sigma = 1.0;

  void validate() const;
  bool operator==(const WorkerParams&) const = default;
};

/// One manager supervising `agents` over the horizon [0, T].
struct FirmSpec {
  WorkerParams manager;
  std::vector<WorkerParams> agents;
  double T = 1.0;
  /// Initial outputs, manager first. Empty means all zero.
  std::vector<double> x0;

  std::size_t agent_count() const { return agents.size(); }
  std::size_t worker_count() const { return agents.size() + 1; }
  void validate() const;

  /// Manager and `n` agents all sharing `w`.
  static FirmSpec identical(const WorkerParams& w, std::size_t n, double T = 1.0);
};

/// Payment rates (z, gamma) on the reported net benefit and its quadratic
/// variation.
struct RateQV {
  double z = 0.0;
  double gamma = 0.0;
};

/// Manager contract
///   xi_T = xi0 - hamiltonian_rate * T + z * zeta_T + gamma_eff * <zeta>_T.
struct ContractQV {
  double xi0 = 0.0;
  double z = 0.0;
  double gamma_eff = 0.0;
  double hamiltonian_rate = 0.0;

  double fixed_part(double T) const { return xi0 - hamiltonian_rate * T; }
};

/// Agent contract
///   xi_T = xi0 - hamiltonian_rate * T + z * X_T + qv_coeff * <X>_T.
struct AgentContract {
  double xi0 = 0.0;
  double z = 0.0;
  double qv_coeff = 0.0;
  double hamiltonian_rate = 0.0;

  double fixed_part(double T) const { return xi0 - hamiltonian_rate * T; }
};

struct DirectSolution {
  std::vector<double> rates;
  std::vector<double> efforts;
  /// Per unit time.
  double principal_value = 0.0;
};

/// k + R sigma^2.
double effective_risk(const WorkerParams& w);

/// Effort cost a^2 / (2k).
double effort_cost(double effort, const WorkerParams& w);

/// sup_a {a z - c(a)} = k z^2 / 2, the Hamiltonian of a worker paid z per
/// unit of his own output.
double worker_hamiltonian(double z, const WorkerParams& w);

/// Optimal rates, efforts and principal value when every worker is
/// contracted directly.
DirectSolution dc_solution(std::span<const WorkerParams> workers);

/// Best-response effort k z of a worker paid z per unit of output.
double agent_best_effort(double z, const WorkerParams& w);

/// R~ z - sigma^2 gamma for one agent; positive inside the admissible set.
double admissibility_margin(const RateQV& rate, const WorkerParams& agent);

bool is_admissible(const RateQV& rate, const FirmSpec& firm);

/// Rate the manager offers an agent when he is paid `rate`:
/// (k z - sigma^2 gamma) / (R~ z - sigma^2 gamma).
double z_ib(const RateQV& rate, const WorkerParams& agent);

/// Contribution of one agent to the principal's objective when the manager
/// is paid `rate` and has risk aversion `manager_R`.
double h_ib(const RateQV& rate, const WorkerParams& agent, double manager_R);

/// The manager's Hamiltonian with the inner suprema in closed form.
double manager_hamiltonian(const RateQV& rate, const FirmSpec& firm);

}  // namespace hiercon
