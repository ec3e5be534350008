#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "hiercon/errors.hpp"

namespace hiercon::opt {

using Point = std::vector<double>;
using Objective = std::function<double(std::span<const double>)>;
using Predicate = std::function<bool(std::span<const double>)>;

/// Value assigned to infeasible or non-finite evaluations.
inline constexpr double kInfeasibleValue = -1e300;

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};

struct OptProblem {
  Objective objective;
  /// Empty means every point of the box is feasible.
  Predicate feasible;
  std::vector<Interval> box;
  double tol_x = 1e-10;
  /// Relative value tolerance; the absolute threshold is tol_f * max(1, |f|).
  double tol_f = 1e-9;
  std::size_t max_evals = 100000;
  /// Step of the central differences used for the first-order check.
  double foc_step = 1e-5;

  std::size_t dimension() const { return box.size(); }
  void validate() const;
};

struct OptReport {
  Point argmax;
  double value = kInfeasibleValue;
  /// max_j |df/dx_j| by central differences; NaN when a probe point is
  /// infeasible.
  double foc_residual = std::numeric_limits<double>::quiet_NaN();
  bool on_boundary = false;
  std::size_t evals = 0;
  bool converged = false;
};

/// Maximizes a scalar function on an interval. A uniform scan of
/// `scan_points` points selects the bracket, then Brent's method refines it.
OptReport maximize_1d(const OptProblem& p, std::size_t scan_points = 1024);

struct NelderMeadOptions {
  /// Latin-hypercube starts added to the caller's starts.
  std::size_t lhs_starts = 8;
  std::uint64_t lhs_seed = 0x5eed;
  /// Initial simplex edge as a fraction of each box width.
  double initial_step = 0.05;
  /// Fresh-simplex restarts from the incumbent after convergence.
  std::size_t max_restarts = 6;
};

/// Multistart Nelder-Mead maximization. Points outside the box or failing the
/// feasibility predicate evaluate to kInfeasibleValue.
OptReport maximize_nd(const OptProblem& p, std::span<const Point> starts,
                      const NelderMeadOptions& options = {});

/// max_j |f(x + h e_j) - f(x - h e_j)| / (2h). Returns NaN if any probe is
/// infeasible (`feasible` may be empty).
double foc_residual(const Objective& f, std::span<const double> x, double h,
                    const Predicate& feasible = {});

/// Threshold below which a FOC residual counts as stationary for an
/// objective of magnitude `value`.
inline double foc_threshold(double value) { return 1e-4 * std::max(1.0, std::abs(value)); }

}  // namespace hiercon::opt
