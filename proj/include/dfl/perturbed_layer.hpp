#pragma once

#include <cstdint>

#include "dfl/storage_opt.hpp"

namespace dfl {

struct PerturbConfig {
  double epsilon = 5.0;   // $/MWh
  int num_samples = 1;    // K
  std::uint64_t seed = 0;

  void validate() const;  // InvalidArgument on epsilon <= 0 or K < 1
};

struct LossBreakdown {
  double perturbed_fy = 0.0;
  double mse_regularizer = 0.0;  // sum_t (lambda_t - xi_t)^2, before the beta weight
  double total = 0.0;
  Vector gradient;  // d total / d lambda
};

/// Observed decisions. A net-only target is split as p = max(y, 0),
/// b = max(-y, 0).
struct Target {
  Vector discharge;
  Vector charge;

  static Target from_net(const Vector& net);
  static Target from_schedule(const DispatchSchedule& s) { return {s.discharge, s.charge}; }
  Vector net() const { return discharge - charge; }
};

/// Standard normal vector of length `dim` for sample `index` under `seed`.
/// Depends only on (seed, index), never on call order.
Vector gaussian_sample(std::uint64_t seed, std::uint64_t index, int dim);

/// F(lambda) - (lambda^T y - u(y)). Throws InfeasibleTarget if the target
/// leaves the feasible set by more than 1e-6.
double fy_loss(const Vector& reward_hat, const Target& target, const StorageSpec& spec,
               const SolveOptions& solve = {});
double fy_loss(const Vector& reward_hat, const Vector& target_y, const StorageSpec& spec,
               const SolveOptions& solve = {});

/// Sample averages of F(lambda + eps Z_m) and of the net argmax, from one
/// pass over the K draws.
struct PerturbedResult {
  double value = 0.0;
  Vector solution;
};
PerturbedResult perturbed_evaluate(const Vector& reward_hat, const StorageSpec& spec,
                                   const PerturbConfig& cfg, const SolveOptions& solve = {});

double perturbed_value(const Vector& reward_hat, const StorageSpec& spec, const PerturbConfig& cfg,
                       const SolveOptions& solve = {});
Vector perturbed_solution(const Vector& reward_hat, const StorageSpec& spec, const PerturbConfig& cfg,
                          const SolveOptions& solve = {});

double perturbed_fy_loss(const Vector& reward_hat, const Target& target, const StorageSpec& spec,
                         const PerturbConfig& cfg, const SolveOptions& solve = {});
double perturbed_fy_loss(const Vector& reward_hat, const Vector& target_y, const StorageSpec& spec,
                         const PerturbConfig& cfg, const SolveOptions& solve = {});

/// (y*_eps - y) * step_hours, with the same draws as perturbed_fy_loss, so it
/// is the exact gradient of the sample-average loss away from ties.
Vector perturbed_gradient(const Vector& reward_hat, const Target& target, const StorageSpec& spec,
                          const PerturbConfig& cfg, const SolveOptions& solve = {});
Vector perturbed_gradient(const Vector& reward_hat, const Vector& target_y, const StorageSpec& spec,
                          const PerturbConfig& cfg, const SolveOptions& solve = {});

/// Perturbed FY loss plus beta * ||lambda - xi||^2, value and gradient.
LossBreakdown hybrid_loss(const Vector& reward_hat, const Target& target, const Vector& prior_xi,
                          double beta, const StorageSpec& spec, const PerturbConfig& cfg,
                          const SolveOptions& solve = {});
LossBreakdown hybrid_loss(const Vector& reward_hat, const Vector& target_y, const Vector& prior_xi,
                          double beta, const StorageSpec& spec, const PerturbConfig& cfg,
                          const SolveOptions& solve = {});

}  // namespace dfl
