#include "hiercon/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <boost/math/tools/minima.hpp>
#include <fmt/format.h>

namespace hiercon::opt {

namespace {

/// Counts evaluations and maps infeasible, out-of-box, throwing or
/// non-finite evaluations to kInfeasibleValue.
class Evaluator {
 public:
  explicit Evaluator(const OptProblem& p) : p_(p) {}

  double operator()(std::span<const double> x) {
    ++evals_;
    if (!inside(x)) return kInfeasibleValue;
    double f = kInfeasibleValue;
    try {
      f = p_.objective(x);
    } catch (const DomainError&) {
      return kInfeasibleValue;
    }
    return std::isfinite(f) ? f : kInfeasibleValue;
  }

  bool inside(std::span<const double> x) const {
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (!(x[j] >= p_.box[j].lower && x[j] <= p_.box[j].upper)) return false;
    }
    return !p_.feasible || p_.feasible(x);
  }

  std::size_t evals() const { return evals_; }
  bool exhausted() const { return evals_ >= p_.max_evals; }

 private:
  const OptProblem& p_;
  std::size_t evals_ = 0;
};

bool is_feasible_value(double f) { return f > kInfeasibleValue; }

bool near_boundary(const OptProblem& p, std::span<const double> x) {
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double width = p.box[j].upper - p.box[j].lower;
    const double tol = std::max(p.tol_x, 1e-6 * width);
    if (x[j] - p.box[j].lower <= tol || p.box[j].upper - x[j] <= tol) return true;
  }
  return false;
}

void finish_report(const OptProblem& p, Evaluator& eval, OptReport& r) {
  Predicate inside = [&eval](std::span<const double> x) { return eval.inside(x); };
  Objective guarded = [&p](std::span<const double> x) {
    try {
      return p.objective(x);
    } catch (const DomainError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  r.foc_residual = foc_residual(guarded, r.argmax, p.foc_step, inside);
  r.on_boundary = near_boundary(p, r.argmax) || std::isnan(r.foc_residual);
  r.evals = eval.evals();
  const bool stationary = !std::isnan(r.foc_residual) && r.foc_residual < foc_threshold(r.value);
  r.converged = !eval.exhausted() && (stationary || r.on_boundary);
}

}  // namespace

void OptProblem::validate() const {
  if (!objective) throw std::invalid_argument("optimization problem has no objective");
  if (box.empty() || box.size() > 4) {
    throw std::invalid_argument(fmt::format("dimension must be in [1, 4], got {}", box.size()));
  }
  for (const auto& iv : box) {
    if (!(iv.lower < iv.upper)) {
      throw std::invalid_argument(
          fmt::format("search box needs lower < upper, got [{}, {}]", iv.lower, iv.upper));
    }
  }
  if (!(tol_x > 0.0) || !(tol_f > 0.0) || !(foc_step > 0.0) || max_evals == 0) {
    throw std::invalid_argument("tolerances, FOC step and evaluation budget must be positive");
  }
}

double foc_residual(const Objective& f, std::span<const double> x, double h,
                    const Predicate& feasible) {
  Point probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    probe[j] = x[j] + h;
    if (feasible && !feasible(probe)) return std::numeric_limits<double>::quiet_NaN();
    const double up = f(probe);
    probe[j] = x[j] - h;
    if (feasible && !feasible(probe)) return std::numeric_limits<double>::quiet_NaN();
    const double down = f(probe);
    probe[j] = x[j];
    if (!std::isfinite(up) || !std::isfinite(down)) return std::numeric_limits<double>::quiet_NaN();
    worst = std::max(worst, std::abs(up - down) / (2.0 * h));
  }
  return worst;
}

OptReport maximize_1d(const OptProblem& p, std::size_t scan_points) {
  p.validate();
  if (p.dimension() != 1) throw std::invalid_argument("maximize_1d needs a 1-D problem");
  scan_points = std::max<std::size_t>(scan_points, 3);

  Evaluator eval(p);
  const double lo = p.box[0].lower;
  const double hi = p.box[0].upper;
  const double step = (hi - lo) / static_cast<double>(scan_points - 1);

  std::size_t best = scan_points;
  double best_f = kInfeasibleValue;
  for (std::size_t i = 0; i < scan_points; ++i) {
    const double x = i + 1 == scan_points ? hi : lo + step * static_cast<double>(i);
    const double f = eval(std::span<const double>(&x, 1));
    if (is_feasible_value(f) && (best == scan_points || f > best_f)) {
      best = i;
      best_f = f;
    }
  }
  if (best == scan_points) {
    throw InfeasibleError(fmt::format("no feasible point found in [{}, {}]", lo, hi));
  }

  OptReport r;
  r.argmax = {best + 1 == scan_points ? hi : lo + step * static_cast<double>(best)};
  r.value = best_f;

  const double a = best == 0 ? lo : lo + step * static_cast<double>(best - 1);
  const double c = best + 1 >= scan_points ? hi : lo + step * static_cast<double>(best + 1);
  auto negated = [&eval](double x) { return -eval(std::span<const double>(&x, 1)); };
  std::uintmax_t iters = std::max<std::uintmax_t>(1, p.max_evals - std::min(p.max_evals, eval.evals()));
  const auto [x_ref, neg_f] = boost::math::tools::brent_find_minima(
      negated, a, c, std::numeric_limits<double>::digits / 2, iters);
  if (is_feasible_value(-neg_f) && -neg_f > r.value) {
    r.argmax[0] = x_ref;
    r.value = -neg_f;
  }

  finish_report(p, eval, r);
  return r;
}

namespace {

std::vector<Point> latin_hypercube(const OptProblem& p, std::size_t count, std::uint64_t seed) {
  std::vector<Point> pts(count, Point(p.dimension()));
  if (count == 0) return pts;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> strata(count);
  for (std::size_t j = 0; j < p.dimension(); ++j) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    const double width = p.box[j].upper - p.box[j].lower;
    for (std::size_t i = 0; i < count; ++i) {
      pts[i][j] = p.box[j].lower +
                  width * (static_cast<double>(strata[i]) + unit(rng)) / static_cast<double>(count);
    }
  }
  return pts;
}

struct Vertex {
  Point x;
  double f;
};

/// One Nelder-Mead run from `start`; stops on convergence or when `budget`
/// evaluations have been spent.
Vertex nelder_mead(const OptProblem& p, Evaluator& eval, const Vertex& start,
                   double step_fraction, std::size_t budget) {
  const std::size_t d = p.dimension();
  const std::size_t limit = eval.evals() + budget;

  std::vector<Vertex> simplex;
  simplex.push_back(start);
  for (std::size_t j = 0; j < d; ++j) {
    const double h = step_fraction * (p.box[j].upper - p.box[j].lower);
    Point x = start.x;
    x[j] += h;
    double f = eval(x);
    if (!is_feasible_value(f)) {
      x[j] = start.x[j] - h;
      f = eval(x);
    }
    simplex.push_back({std::move(x), f});
  }

  auto by_value = [](const Vertex& a, const Vertex& b) { return a.f > b.f; };
  auto spread_ok = [&](const std::vector<Vertex>& s) {
    const double scale = std::max(1.0, std::abs(s.front().f));
    return is_feasible_value(s.back().f) && s.front().f - s.back().f <= p.tol_f * scale;
  };
  auto diameter = [&](const std::vector<Vertex>& s) {
    double diam = 0.0;
    for (std::size_t v = 1; v < s.size(); ++v) {
      for (std::size_t j = 0; j < d; ++j) {
        const double width = p.box[j].upper - p.box[j].lower;
        diam = std::max(diam, std::abs(s[v].x[j] - s[0].x[j]) / width);
      }
    }
    return diam;
  };

  std::size_t stale = 0;
  double last_best = start.f;
  while (eval.evals() < limit && !eval.exhausted()) {
    std::stable_sort(simplex.begin(), simplex.end(), by_value);
    if (spread_ok(simplex) && (diameter(simplex) <= 1e-7 || stale > 50 * d)) break;
    if (simplex.front().f > last_best) {
      last_best = simplex.front().f;
      stale = 0;
    } else {
      ++stale;
    }

    Point centroid(d, 0.0);
    for (std::size_t v = 0; v < d; ++v) {
      for (std::size_t j = 0; j < d; ++j) centroid[j] += simplex[v].x[j] / static_cast<double>(d);
    }
    auto along = [&](double t) {
      Point x(d);
      for (std::size_t j = 0; j < d; ++j) x[j] = centroid[j] + t * (simplex[d].x[j] - centroid[j]);
      return x;
    };

    Vertex reflected{along(-1.0), 0.0};
    reflected.f = eval(reflected.x);
    if (reflected.f > simplex[0].f) {
      Vertex expanded{along(-2.0), 0.0};
      expanded.f = eval(expanded.x);
      simplex[d] = expanded.f > reflected.f ? std::move(expanded) : std::move(reflected);
      continue;
    }
    if (reflected.f > simplex[d - 1].f) {
      simplex[d] = std::move(reflected);
      continue;
    }
    const bool outside = reflected.f > simplex[d].f;
    Vertex contracted{along(outside ? -0.5 : 0.5), 0.0};
    contracted.f = eval(contracted.x);
    if (outside ? contracted.f >= reflected.f : contracted.f > simplex[d].f) {
      simplex[d] = std::move(contracted);
      continue;
    }
    for (std::size_t v = 1; v <= d; ++v) {
      for (std::size_t j = 0; j < d; ++j) {
        simplex[v].x[j] = simplex[0].x[j] + 0.5 * (simplex[v].x[j] - simplex[0].x[j]);
      }
      simplex[v].f = eval(simplex[v].x);
    }
  }
  std::stable_sort(simplex.begin(), simplex.end(), by_value);
  return simplex.front();
}

}  // namespace

OptReport maximize_nd(const OptProblem& p, std::span<const Point> starts,
                      const NelderMeadOptions& options) {
  p.validate();
  for (const auto& s : starts) {
    if (s.size() != p.dimension()) {
      throw std::invalid_argument(
          fmt::format("start has dimension {}, problem has {}", s.size(), p.dimension()));
    }
  }

  Evaluator eval(p);
  std::vector<Point> candidates(starts.begin(), starts.end());
  for (auto& x : latin_hypercube(p, options.lhs_starts, options.lhs_seed)) {
    candidates.push_back(std::move(x));
  }

  std::vector<Vertex> feasible_starts;
  for (auto& x : candidates) {
    const double f = eval(x);
    if (is_feasible_value(f)) feasible_starts.push_back({std::move(x), f});
  }
  if (feasible_starts.empty()) {
    throw InfeasibleError(
        fmt::format("none of the {} starting points is feasible", candidates.size()));
  }

  const std::size_t per_start =
      (p.max_evals - std::min(p.max_evals, eval.evals())) / feasible_starts.size();
  const std::size_t per_run = std::max<std::size_t>(per_start / (options.max_restarts + 1), 64);

  Vertex best{{}, kInfeasibleValue};
  for (const auto& start : feasible_starts) {
    Vertex incumbent = start;
    for (std::size_t restart = 0; restart <= options.max_restarts; ++restart) {
      // Later restarts use smaller simplices around the incumbent.
      const double step = options.initial_step / static_cast<double>(1u << std::min<std::size_t>(restart, 10));
      Vertex next = nelder_mead(p, eval, incumbent, step, per_run);
      const double scale = std::max(1.0, std::abs(incumbent.f));
      const bool improved = next.f > incumbent.f + p.tol_f * scale;
      if (next.f > incumbent.f) incumbent = std::move(next);
      if (!improved && restart > 0) break;
      if (eval.exhausted()) break;
    }
    if (incumbent.f > best.f) best = std::move(incumbent);
    if (eval.exhausted()) break;
  }

  OptReport r;
  r.argmax = best.x;
  r.value = best.f;
  finish_report(p, eval, r);
  return r;
}

}  // namespace hiercon::opt
