#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dfl/errors.hpp"

namespace dfl {

using Vector = Eigen::VectorXd;

/// Physical parameters of one storage unit plus the scheduling horizon.
///
/// Power quantities (p, b) are MW; they are turned into energy per step by
/// multiplying with `step_hours`. Cost coefficients apply to energy per step:
/// u = C1 q_p + C2 q_p^2 + C3 q_b + C4 q_b^2 with q = power * step_hours.
struct StorageSpec {
  double power_rating = 1.0;    // P, MW
  double capacity = 1.0;        // E, MWh
  double efficiency = 1.0;      // eta, applied on both legs
  double initial_soc = 0.0;     // e0, MWh
  int horizon = 24;             // T, steps
  double step_hours = 1.0;
  double cost_c1 = 0.0;         // $/MWh, linear discharge
  double cost_c2 = 0.0;         // $/MWh^2, quadratic discharge
  double cost_c3 = 0.0;         // $/MWh, linear charge
  double cost_c4 = 0.0;         // $/MWh^2, quadratic charge
  std::optional<double> terminal_soc_min;  // off by default, e_T is free

  bool linear_costs() const { return cost_c2 == 0.0 && cost_c4 == 0.0; }

  /// Throws InvalidArgument for malformed parameters and InfeasibleSpec when
  /// the initial or terminal SoC requirement cannot be met.
  void validate() const;
};

struct DispatchSchedule {
  Vector discharge;  // p
  Vector charge;     // b
  Vector soc;        // e_1..e_T
  Vector net;        // y = p - b
  double objective = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(net.size()); }
};

struct SolveOptions {
  double tolerance = 1e-8;  // relative duality gap
  int max_iterations = 200;
  /// Refine the interior-point iterate on its identified active set.
  bool polish = true;
  /// Lexicographic tie-break toward the least throughput among optimal
  /// schedules, followed by a pass that zeroes idle-equivalent steps.
  bool prefer_idle = false;
};

/// Maximizes sum_t lambda_t (p_t - b_t) - u(p_t, b_t) over the storage
/// feasible set with p_t fixed at zero wherever lambda_t < 0.
///
/// Interior-point (Mehrotra predictor-corrector) on the QP with the SoC
/// eliminated; degenerate LPs return a point near the analytic center of the
/// optimal face, not necessarily a vertex.
DispatchSchedule solve_dispatch(const Vector& reward, const StorageSpec& spec,
                                const SolveOptions& options = {});

/// Sum of per-step charge/discharge costs.
double dispatch_cost(const DispatchSchedule& schedule, const StorageSpec& spec);
double dispatch_cost(const Vector& discharge, const Vector& charge, const StorageSpec& spec);

/// sum_t lambda_t (p_t - b_t) step_hours - u.
double objective_value(const Vector& reward, const DispatchSchedule& schedule,
                       const StorageSpec& spec);
double objective_value(const Vector& reward, const Vector& discharge, const Vector& charge,
                       const StorageSpec& spec);

/// SoC trajectory e_1..e_T implied by (p, b) from the spec's initial SoC.
Vector soc_trajectory(const Vector& discharge, const Vector& charge, const StorageSpec& spec);

/// Builds a schedule (SoC, net, objective) from a (p, b) pair.
DispatchSchedule make_schedule(const Vector& reward, const Vector& discharge,
                               const Vector& charge, const StorageSpec& spec);

/// Splits net dispatch into p = max(y, 0), b = max(-y, 0).
DispatchSchedule schedule_from_net(const Vector& net, const StorageSpec& spec);

struct Violation {
  std::string constraint;
  int time_index = 0;  // 1-based
  double magnitude = 0.0;
};

/// Every box, SoC and dynamics violation larger than `slack`. The stored SoC
/// is compared against the dynamics recomputed from (p, b).
std::vector<Violation> check_feasible(const DispatchSchedule& schedule, const StorageSpec& spec,
                                      double slack);

struct OracleOptions {
  double max_cells = 5e7;  // grid states * horizon
};

/// Brute-force value iteration over a SoC grid of the given resolution.
/// Each step's transition reward is the exact best (p, b) split for the
/// required SoC change, so the only approximation is the grid itself.
DispatchSchedule dp_oracle_solve(const Vector& reward, const StorageSpec& spec,
                                 double soc_grid_resolution, const OracleOptions& options = {});

}  // namespace dfl
