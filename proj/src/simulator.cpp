#include "hiercon/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <string>
#include <thread>

#include <fmt/format.h>

#include "hiercon/rng.hpp"
#include "hiercon/two_level.hpp"

namespace hiercon {

namespace {

constexpr double kExponentCap = 700.0;

/// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Everything shared by the paths, resolved once.
struct Plan {
  std::vector<WorkerParams> workers;  // manager first
  std::vector<double> efforts;
  std::vector<double> costs;          // effort cost over the horizon
  std::vector<double> agent_z;
  std::vector<double> agent_h;
  std::vector<double> agent_qv;
  double z = 0.0;
  double manager_qv = 0.0;
  double manager_h = 0.0;
  std::vector<double> x0;
  double T = 1.0;
};

struct PathOutcome {
  std::vector<double> x_T;
  double zeta_T = 0.0;
  double qv = 0.0;
  std::vector<double> xi_agents;
  double xi_manager = 0.0;
  std::vector<double> utilities;
  bool flagged = false;
};

PathOutcome run_path(const Plan& plan, const MCConfig& cfg, std::uint64_t stream, double sign) {
  const std::size_t W = plan.workers.size();
  const std::size_t n = W - 1;
  const double dt = plan.T / static_cast<double>(cfg.steps);
  const double fine_sd = std::sqrt(dt / static_cast<double>(cfg.refinement));

  NormalStream normals(cfg.seed, stream);
  std::vector<double> dw(W);

  PathOutcome out;
  out.x_T = plan.x0;
  out.xi_agents.assign(n, 0.0);
  out.zeta_T = std::accumulate(plan.x0.begin(), plan.x0.end(), 0.0);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::fill(dw.begin(), dw.end(), 0.0);
    for (std::size_t q = 0; q < cfg.refinement; ++q) {
      for (std::size_t w = 0; w < W; ++w) dw[w] += normals.next();
    }
    double dzeta = 0.0;
    for (std::size_t w = 0; w < W; ++w) {
      const double dx = plan.efforts[w] * dt + plan.workers[w].sigma * sign * fine_sd * dw[w];
      out.x_T[w] += dx;
      dzeta += dx;
      if (w > 0) {
        const std::size_t i = w - 1;
        const double dxi = -plan.agent_h[i] * dt + plan.agent_z[i] * dx + plan.agent_qv[i] * dx * dx;
        out.xi_agents[i] += dxi;
        dzeta -= dxi;
      }
    }
    out.zeta_T += dzeta;
    out.qv += dzeta * dzeta;
    out.xi_manager += -plan.manager_h * dt + plan.z * dzeta + plan.manager_qv * dzeta * dzeta;
  }

  out.utilities.resize(W);
  for (std::size_t w = 0; w < W; ++w) {
    const double pay = w == 0 ? out.xi_manager : out.xi_agents[w - 1];
    const double exponent = -plan.workers[w].R * (pay - plan.costs[w]);
    if (!std::isfinite(exponent) || std::abs(exponent) > kExponentCap) {
      out.flagged = true;
      out.utilities[w] = std::numeric_limits<double>::quiet_NaN();
    } else {
      out.utilities[w] = -std::exp(exponent);
    }
  }
  if (!std::isfinite(out.zeta_T) || !std::isfinite(out.qv)) out.flagged = true;
  return out;
}

Plan make_plan(const FirmSpec& firm, const SimRates& rates, const SimEfforts& efforts) {
  firm.validate();
  const std::size_t n = firm.agents.size();
  if (rates.agent_rates.size() != n) {
    throw DomainError(fmt::format("expected {} agent rates, got {}", n, rates.agent_rates.size()));
  }
  if (!efforts.agents.empty() && efforts.agents.size() != n) {
    throw DomainError(fmt::format("expected {} agent efforts, got {}", n, efforts.agents.size()));
  }
  const auto& m = firm.manager;
  if (!std::isfinite(rates.manager.z) || !std::isfinite(rates.manager.gamma)) {
    throw DomainError("manager rates must be finite");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(rates.agent_rates[i])) throw DomainError(fmt::format("agent {} rate is not finite", i + 1));
    // Weak admissibility: the manager's choice problem must be bounded.
    if (admissibility_margin(rates.manager, firm.agents[i]) < 0.0) {
      throw DomainError(fmt::format("manager rates (z={}, gamma={}) are not admissible for agent {}",
                                    rates.manager.z, rates.manager.gamma, i + 1));
    }
  }

  Plan plan;
  plan.T = firm.T;
  plan.workers.push_back(m);
  plan.workers.insert(plan.workers.end(), firm.agents.begin(), firm.agents.end());
  plan.x0 = firm.x0.empty() ? std::vector<double>(n + 1, 0.0) : firm.x0;

  plan.efforts.push_back(efforts.manager.value_or(agent_best_effort(rates.manager.z, m)));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = firm.agents[i];
    const double z = rates.agent_rates[i];
    const bool given = !efforts.agents.empty() && efforts.agents[i].has_value();
    plan.efforts.push_back(given ? *efforts.agents[i] : agent_best_effort(z, a));
    const auto contract = agent_contract(z, a);
    plan.agent_z.push_back(contract.z);
    plan.agent_h.push_back(contract.hamiltonian_rate);
    plan.agent_qv.push_back(contract.qv_coeff);
  }
  for (std::size_t w = 0; w <= n; ++w) {
    if (!std::isfinite(plan.efforts[w])) throw DomainError(fmt::format("effort of worker {} is not finite", w));
    plan.costs.push_back(effort_cost(plan.efforts[w], plan.workers[w]) * firm.T);
  }
  plan.z = rates.manager.z;
  plan.manager_qv = 0.5 * (rates.manager.gamma + m.R * rates.manager.z * rates.manager.z);
  plan.manager_h = manager_hamiltonian_at(rates.manager, rates.agent_rates, firm);
  return plan;
}

}  // namespace

void MCConfig::validate() const {
  if (paths < 1) throw DomainError("paths must be >= 1");
  if (steps < 1) throw DomainError("steps must be >= 1");
  if (refinement < 1) throw DomainError("refinement must be >= 1");
}

SimRates rates_from(const SolveResult& res) {
  if (res.regime == Regime::direct) {
    throw DomainError("direct contracting has no manager contract on the net benefit");
  }
  return {{res.z_b, res.gamma_b}, res.agent_rates};
}

double manager_hamiltonian_at(const RateQV& rate, std::span<const double> agent_rates, const FirmSpec& firm) {
  const auto& m = firm.manager;
  double h = 0.5 * rate.gamma * m.sigma * m.sigma + worker_hamiltonian(rate.z, m);
  for (std::size_t i = 0; i < firm.agents.size(); ++i) {
    const auto& a = firm.agents[i];
    const double zi = agent_rates[i];
    const double shortfall = 1.0 - zi;
    h += rate.z * (a.k * zi - 0.5 * effective_risk(a) * zi * zi) +
         0.5 * rate.gamma * a.sigma * a.sigma * shortfall * shortfall;
  }
  return h;
}

double realized_qv(std::span<const double> increments) {
  CompensatedSum s;
  for (const double d : increments) s.add(d * d);
  return s.value();
}

unsigned thread_count(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("HIERCON_THREADS"); env != nullptr && *env != '\0') {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw DomainError(fmt::format("HIERCON_THREADS must be a positive integer, got '{}'", env));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

PathBundle simulate(const FirmSpec& firm, const SimRates& rates, const SimEfforts& efforts, const MCConfig& cfg) {
  cfg.validate();
  const Plan plan = make_plan(firm, rates, efforts);
  const std::size_t W = plan.workers.size();
  const std::size_t n = W - 1;

  // A unit is one path, or an antithetic pair sharing a substream.
  const std::size_t per_unit = cfg.antithetic ? 2 : 1;
  const std::size_t units = (cfg.paths + per_unit - 1) / per_unit;

  // Per-unit means of: W utilities, payoff, qv, manager pay, zeta.
  const std::size_t Q = W + 4;
  std::vector<double> unit_means(units * Q, 0.0);
  std::vector<std::size_t> unit_size(units, 0);
  std::vector<char> unit_flagged(units, 0);

  PathBundle bundle;
  bundle.paths = cfg.paths;
  bundle.workers = W;
  if (cfg.keep_paths) {
    bundle.x_T.resize(cfg.paths * W);
    bundle.zeta_T.resize(cfg.paths);
    bundle.qv_zeta.resize(cfg.paths);
    bundle.xi_agents.resize(cfg.paths * n);
    bundle.xi_manager.resize(cfg.paths);
    bundle.utilities.resize(cfg.paths * W);
  }

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t u = begin; u < end; ++u) {
      double* means = &unit_means[u * Q];
      for (std::size_t k = 0; k < per_unit; ++k) {
        const std::size_t path = u * per_unit + k;
        if (path >= cfg.paths) break;
        const auto o = run_path(plan, cfg, u, k == 0 ? 1.0 : -1.0);
        ++unit_size[u];
        if (o.flagged) unit_flagged[u] = 1;
        for (std::size_t w = 0; w < W; ++w) means[w] += o.utilities[w];
        means[W] += o.zeta_T - o.xi_manager;
        means[W + 1] += o.qv;
        means[W + 2] += o.xi_manager;
        means[W + 3] += o.zeta_T;
        if (cfg.keep_paths) {
          std::copy(o.x_T.begin(), o.x_T.end(), bundle.x_T.begin() + path * W);
          std::copy(o.xi_agents.begin(), o.xi_agents.end(), bundle.xi_agents.begin() + path * n);
          std::copy(o.utilities.begin(), o.utilities.end(), bundle.utilities.begin() + path * W);
          bundle.zeta_T[path] = o.zeta_T;
          bundle.qv_zeta[path] = o.qv;
          bundle.xi_manager[path] = o.xi_manager;
        }
      }
      for (std::size_t q = 0; q < Q; ++q) means[q] /= static_cast<double>(unit_size[u]);
    }
  };

  const std::size_t threads = std::min<std::size_t>(thread_count(cfg.threads), units);
  if (threads <= 1) {
    work(0, units);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (units + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk;
      const std::size_t e = std::min(units, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  }

  // Reduce in unit order so the result does not depend on the thread count.
  std::size_t kept_units = 0;
  std::size_t kept_paths = 0;
  std::vector<CompensatedSum> sums(Q);
  for (std::size_t u = 0; u < units; ++u) {
    if (unit_flagged[u]) {
      bundle.flagged += unit_size[u];
      continue;
    }
    ++kept_units;
    kept_paths += unit_size[u];
    for (std::size_t q = 0; q < Q; ++q) sums[q].add(unit_means[u * Q + q] * static_cast<double>(unit_size[u]));
  }
  std::vector<Estimate> est(Q);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t q = 0; q < Q; ++q) {
    if (kept_paths == 0) {
      est[q] = {nan, nan};
      continue;
    }
    const double mean = sums[q].value() / static_cast<double>(kept_paths);
    double se = nan;
    if (kept_units > 1) {
      CompensatedSum ss;
      for (std::size_t u = 0; u < units; ++u) {
        if (unit_flagged[u]) continue;
        const double d = unit_means[u * Q + q] - mean;
        ss.add(d * d);
      }
      se = std::sqrt(ss.value() / static_cast<double>(kept_units - 1) / static_cast<double>(kept_units));
    }
    est[q] = {mean, se};
  }
  bundle.worker_utility.assign(est.begin(), est.begin() + static_cast<std::ptrdiff_t>(W));
  bundle.principal_payoff = est[W];
  bundle.realized_qv = est[W + 1];
  bundle.manager_pay = est[W + 2];
  bundle.zeta = est[W + 3];
  return bundle;
}

}  // namespace hiercon
