#include "hiercon/model.hpp"

#include <cmath>
#include <string>

#include <fmt/format.h>

namespace hiercon {

namespace {

bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void WorkerParams::validate() const {
  if (!positive_finite(k) || !positive_finite(R) || !positive_finite(sigma)) {
    throw DomainError(fmt::format(
        "worker parameters must be positive and finite (k={}, R={}, sigma={})", k, R, sigma));
  }
}

void FirmSpec::validate() const {
  manager.validate();
  for (std::size_t i = 0; i < agents.size(); ++i) {
    try {
      agents[i].validate();
    } catch (const DomainError& e) {
      throw DomainError(fmt::format("agent {}: {}", i + 1, e.what()));
    }
  }
  if (!positive_finite(T)) throw DomainError(fmt::format("horizon must be positive, got {}", T));
  if (!x0.empty() && x0.size() != worker_count()) {
    throw DomainError(fmt::format("x0 has {} entries for {} workers", x0.size(), worker_count()));
  }
}

FirmSpec FirmSpec::identical(const WorkerParams& w, std::size_t n, double T) {
  FirmSpec firm;
  firm.manager = w;
  firm.agents.assign(n, w);
  firm.T = T;
  return firm;
}

double effective_risk(const WorkerParams& w) { return w.k + w.R * w.sigma * w.sigma; }

double effort_cost(double effort, const WorkerParams& w) { return 0.5 * effort * effort / w.k; }

double worker_hamiltonian(double z, const WorkerParams& w) { return 0.5 * w.k * z * z; }

DirectSolution dc_solution(std::span<const WorkerParams> workers) {
  DirectSolution out;
  out.rates.reserve(workers.size());
  out.efforts.reserve(workers.size());
  for (const auto& w : workers) {
    w.validate();
    const double rate = w.k / effective_risk(w);
    out.rates.push_back(rate);
    out.efforts.push_back(w.k * rate);
    out.principal_value += 0.5 * w.k * rate;
  }
  return out;
}

double agent_best_effort(double z, const WorkerParams& w) { return w.k * z; }

double admissibility_margin(const RateQV& rate, const WorkerParams& agent) {
  return effective_risk(agent) * rate.z - agent.sigma * agent.sigma * rate.gamma;
}

bool is_admissible(const RateQV& rate, const FirmSpec& firm) {
  for (const auto& a : firm.agents) {
    if (!(admissibility_margin(rate, a) > kAdmissibilityEps)) return false;
  }
  return true;
}

double z_ib(const RateQV& rate, const WorkerParams& agent) {
  const double denom = admissibility_margin(rate, agent);
  if (!(denom > kAdmissibilityEps)) {
    throw DomainError(fmt::format(
        "rate (z={}, gamma={}) is not admissible for agent (k={}, R={}, sigma={}): "
        "R~ z - sigma^2 gamma = {}",
        rate.z, rate.gamma, agent.k, agent.R, agent.sigma, denom));
  }
  const double s2 = agent.sigma * agent.sigma;
  return (agent.k * rate.z - s2 * rate.gamma) / denom;
}

double h_ib(const RateQV& rate, const WorkerParams& agent, double manager_R) {
  const double zs = z_ib(rate, agent);
  const double s2 = agent.sigma * agent.sigma;
  const double shortfall = 1.0 - zs;
  return agent.k * zs - 0.5 * effective_risk(agent) * zs * zs -
         0.5 * manager_R * s2 * rate.z * rate.z * shortfall * shortfall;
}

double manager_hamiltonian(const RateQV& rate, const FirmSpec& firm) {
  const auto& m = firm.manager;
  double h = 0.5 * rate.gamma * m.sigma * m.sigma + worker_hamiltonian(rate.z, m);
  for (std::size_t i = 0; i < firm.agents.size(); ++i) {
    const auto& a = firm.agents[i];
    double zs = 0.0;
    try {
      zs = z_ib(rate, a);
    } catch (const DomainError& e) {
      throw DomainError(fmt::format("agent {}: {}", i + 1, e.what()));
    }
    const double shortfall = 1.0 - zs;
    h += rate.z * (a.k * zs - 0.5 * effective_risk(a) * zs * zs) +
         0.5 * rate.gamma * a.sigma * a.sigma * shortfall * shortfall;
  }
  return h;
}

}  // namespace hiercon
