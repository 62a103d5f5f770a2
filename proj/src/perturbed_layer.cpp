#include "dfl/perturbed_layer.hpp"

#include <random>

#include "dfl/parallel.hpp"
#include "dfl/rng.hpp"

namespace dfl {
namespace {

void require_target(const Target& target, const StorageSpec& spec) {
  if (target.discharge.size() != spec.horizon || target.charge.size() != spec.horizon)
    throw DimensionMismatch("target length does not match horizon");
  DispatchSchedule s;
  s.discharge = target.discharge;
  s.charge = target.charge;
  s.net = target.net();
  s.soc = soc_trajectory(s.discharge, s.charge, spec);
  const auto v = check_feasible(s, spec, 1e-6);
  if (!v.empty()) {
    throw InfeasibleTarget("target violates " + v.front().constraint + " at t=" +
                           std::to_string(v.front().time_index) + " by " +
                           std::to_string(v.front().magnitude));
  }
}

void require_reward(const Vector& reward, const StorageSpec& spec) {
  if (reward.size() != spec.horizon) throw DimensionMismatch("reward length does not match horizon");
  if (!reward.allFinite()) throw InvalidArgument("reward contains non-finite entries");
}

// lambda^T y - u(y) for the target decisions.
double target_value(const Vector& reward, const Target& target, const StorageSpec& spec) {
  return objective_value(reward, target.discharge, target.charge, spec);
}

}  // namespace

void PerturbConfig::validate() const {
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
  if (num_samples < 1) throw InvalidArgument("num_samples must be >= 1");
}

Target Target::from_net(const Vector& net) { return {net.cwiseMax(0.0), (-net).cwiseMax(0.0)}; }

Vector gaussian_sample(std::uint64_t seed, std::uint64_t index, int dim) {
  std::mt19937_64 rng(derive_seed(seed, {index}));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(dim);
  for (int i = 0; i < dim; ++i) z[i] = normal(rng);
  return z;
}

double fy_loss(const Vector& reward_hat, const Target& target, const StorageSpec& spec,
               const SolveOptions& solve) {
  require_reward(reward_hat, spec);
  require_target(target, spec);
  const DispatchSchedule best = solve_dispatch(reward_hat, spec, solve);
  return best.objective - target_value(reward_hat, target, spec);
}

double fy_loss(const Vector& reward_hat, const Vector& target_y, const StorageSpec& spec,
               const SolveOptions& solve) {
  return fy_loss(reward_hat, Target::from_net(target_y), spec, solve);
}

PerturbedResult perturbed_evaluate(const Vector& reward_hat, const StorageSpec& spec,
                                   const PerturbConfig& cfg, const SolveOptions& solve) {
  cfg.validate();
  spec.validate();
  require_reward(reward_hat, spec);
  const auto k = static_cast<std::size_t>(cfg.num_samples);
  std::vector<double> values(k);
  std::vector<Vector> nets(k);
  parallel_for(k, [&](std::size_t m) {
    const Vector shifted = reward_hat + cfg.epsilon * gaussian_sample(cfg.seed, m, spec.horizon);
    DispatchSchedule s = solve_dispatch(shifted, spec, solve);
    values[m] = s.objective;
    nets[m] = std::move(s.net);
  });
  PerturbedResult out;
  out.solution = Vector::Zero(spec.horizon);
  for (std::size_t m = 0; m < k; ++m) {
    out.value += values[m];
    out.solution += nets[m];
  }
  out.value /= static_cast<double>(k);
  out.solution /= static_cast<double>(k);
  return out;
}

double perturbed_value(const Vector& reward_hat, const StorageSpec& spec, const PerturbConfig& cfg,
                       const SolveOptions& solve) {
  return perturbed_evaluate(reward_hat, spec, cfg, solve).value;
}

Vector perturbed_solution(const Vector& reward_hat, const StorageSpec& spec, const PerturbConfig& cfg,
                          const SolveOptions& solve) {
  return perturbed_evaluate(reward_hat, spec, cfg, solve).solution;
}

double perturbed_fy_loss(const Vector& reward_hat, const Target& target, const StorageSpec& spec,
                         const PerturbConfig& cfg, const SolveOptions& solve) {
  return hybrid_loss(reward_hat, target, reward_hat, 0.0, spec, cfg, solve).perturbed_fy;
}

double perturbed_fy_loss(const Vector& reward_hat, const Vector& target_y, const StorageSpec& spec,
                         const PerturbConfig& cfg, const SolveOptions& solve) {
  return perturbed_fy_loss(reward_hat, Target::from_net(target_y), spec, cfg, solve);
}

Vector perturbed_gradient(const Vector& reward_hat, const Target& target, const StorageSpec& spec,
                          const PerturbConfig& cfg, const SolveOptions& solve) {
  return hybrid_loss(reward_hat, target, reward_hat, 0.0, spec, cfg, solve).gradient;
}

Vector perturbed_gradient(const Vector& reward_hat, const Vector& target_y, const StorageSpec& spec,
                          const PerturbConfig& cfg, const SolveOptions& solve) {
  return perturbed_gradient(reward_hat, Target::from_net(target_y), spec, cfg, solve);
}

LossBreakdown hybrid_loss(const Vector& reward_hat, const Target& target, const Vector& prior_xi,
                          double beta, const StorageSpec& spec, const PerturbConfig& cfg,
                          const SolveOptions& solve) {
  if (!(beta >= 0.0)) throw InvalidArgument("beta must be >= 0");
  if (prior_xi.size() != reward_hat.size()) throw DimensionMismatch("prior price length mismatch");
  require_reward(reward_hat, spec);
  require_target(target, spec);
  const PerturbedResult pr = perturbed_evaluate(reward_hat, spec, cfg, solve);

  LossBreakdown out;
  out.perturbed_fy = pr.value - target_value(reward_hat, target, spec);
  const Vector diff = reward_hat - prior_xi;
  out.mse_regularizer = diff.squaredNorm();
  out.total = out.perturbed_fy + beta * out.mse_regularizer;
  out.gradient = spec.step_hours * (pr.solution - target.net()) + 2.0 * beta * diff;
  return out;
}

LossBreakdown hybrid_loss(const Vector& reward_hat, const Vector& target_y, const Vector& prior_xi,
                          double beta, const StorageSpec& spec, const PerturbConfig& cfg,
                          const SolveOptions& solve) {
  return hybrid_loss(reward_hat, Target::from_net(target_y), prior_xi, beta, spec, cfg, solve);
}

}  // namespace dfl
