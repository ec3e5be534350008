#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hiercon/model.hpp"

namespace hiercon {

struct SolveResult;

struct MCConfig {
  std::size_t paths = 100000;
  std::size_t steps = 2048;
  std::uint64_t seed = 0;
  bool antithetic = true;
  /// Each Euler increment is assembled from this many finer Gaussian draws,
  /// so (steps, refinement) = (n, 2) follows the same Brownian path as
  /// (2n, 1). Used to measure discretization bias without sampling noise.
  std::size_t refinement = 1;
  /// Keep per-path arrays in the bundle; summaries are always produced.
  bool keep_paths = true;
  /// 0 means HIERCON_THREADS or the hardware default.
  unsigned threads = 0;

  void validate() const;
};

/// Constant payment rates: the manager's (z, gamma) on the net benefit and
/// one linear rate per agent.
struct SimRates {
  RateQV manager;
  std::vector<double> agent_rates;
};

/// Constant efforts; an empty entry means the best response k z.
struct SimEfforts {
  std::optional<double> manager;
  std::vector<std::optional<double>> agents;
};

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

struct PathBundle {
  std::size_t paths = 0;
  std::size_t workers = 0;
  /// Paths dropped because a utility exponent left [-700, 700] or an
  /// accrual was not finite.
  std::size_t flagged = 0;

  // Per-path arrays (empty unless MCConfig::keep_paths). Worker-indexed
  // arrays are row-major with the manager in column 0.
  std::vector<double> x_T;
  std::vector<double> zeta_T;
  std::vector<double> qv_zeta;
  std::vector<double> xi_agents;
  std::vector<double> xi_manager;
  std::vector<double> utilities;

  std::vector<Estimate> worker_utility;  ///< Manager first.
  Estimate principal_payoff;             ///< zeta_T - xi^b_T
  Estimate realized_qv;                  ///< Realized <zeta>_T
  Estimate manager_pay;                  ///< xi^b_T
  Estimate zeta;                         ///< zeta_T

  const Estimate& manager_utility() const { return worker_utility.front(); }
  const Estimate& agent_utility(std::size_t i) const { return worker_utility.at(i + 1); }
};

/// Rates of a solved sophisticated or linear instance.
SimRates rates_from(const SolveResult& res);

/// Manager Hamiltonian at given agent rates (not necessarily his optimal
/// ones), assuming agents best-respond.
double manager_hamiltonian_at(const RateQV& rate, std::span<const double> agent_rates, const FirmSpec& firm);

/// Euler-Maruyama simulation of outputs and contract accruals.
PathBundle simulate(const FirmSpec& firm, const SimRates& rates, const SimEfforts& efforts, const MCConfig& cfg);

/// Sum of squared increments.
double realized_qv(std::span<const double> increments);

/// `requested` when nonzero, else HIERCON_THREADS when set, else the
/// hardware concurrency.
unsigned thread_count(unsigned requested = 0);

}  // namespace hiercon
