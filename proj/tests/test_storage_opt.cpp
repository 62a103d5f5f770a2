#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dfl/storage_opt.hpp"
#include "test_support.hpp"

using namespace dfl;
using dfl::testing::random_reward;
using dfl::testing::random_spec;
using dfl::testing::unit_spec;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Exhaustive enumeration of a two-step lossless instance on a fine grid of
// (y1, y2), independent of both solvers.
double brute_force_two_step(const Vector& reward, const StorageSpec& s) {
  double best = -1e300;
  const int n = 2000;
  for (int i = 0; i <= n; ++i) {
    const double y1 = -s.power_rating + 2.0 * s.power_rating * i / n;
    const double e1 = s.initial_soc - y1;
    if (e1 < -1e-12 || e1 > s.capacity + 1e-12) continue;
    for (int j = 0; j <= n; ++j) {
      const double y2 = -s.power_rating + 2.0 * s.power_rating * j / n;
      const double e2 = e1 - y2;
      if (e2 < -1e-12 || e2 > s.capacity + 1e-12) continue;
      if ((reward[0] < 0 && y1 > 0) || (reward[1] < 0 && y2 > 0)) continue;
      best = std::max(best, reward[0] * y1 + reward[1] * y2);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("two-step lossless example charges then discharges") {
  const StorageSpec s = unit_spec(2);
  const Vector r = vec({1, 5});
  const DispatchSchedule d = solve_dispatch(r, s);
  CHECK(d.net[0] == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(d.net[1] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(d.objective == doctest::Approx(4.0).epsilon(1e-7));
  CHECK(brute_force_two_step(r, s) == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("negative prices never discharge") {
  // From empty storage there is nothing to sell and charging is paid for by
  // the negative price, so the best use of the headroom is the cheaper step.
  const StorageSpec s = unit_spec(2, 0.5);
  const Vector r = vec({-3, -7});
  const DispatchSchedule d = solve_dispatch(r, s);
  CHECK(d.discharge[0] == 0.0);
  CHECK(d.discharge[1] == 0.0);
  CHECK(d.charge[1] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(d.objective == doctest::Approx(3.5).epsilon(1e-7));
  CHECK(std::abs(dp_oracle_solve(r, s, 1e-3).objective - 3.5) < 1e-2);

  // A full unit can only stay idle.
  const DispatchSchedule full = solve_dispatch(r, unit_spec(2, 1.0));
  CHECK(full.net.cwiseAbs().maxCoeff() < 1e-7);
  CHECK(std::abs(full.objective) < 1e-7);
}

TEST_CASE("fractional charging up to the discharge cap") {
  const StorageSpec s = dfl::testing::behavior_spec(3);
  const Vector r = vec({10, 50, 10});
  const DispatchSchedule d = solve_dispatch(r, s);
  // Hand derivation: discharging 0.5 MW from e0 = 0.5 needs 0.5/0.9 MWh,
  // the shortfall 0.5/0.9 - 0.5 is charged at 0.9 efficiency.
  const double b1 = (0.5 / 0.9 - 0.5) / 0.9;
  CHECK(d.charge[0] == doctest::Approx(b1).epsilon(1e-6));
  CHECK(b1 == doctest::Approx(0.0617).epsilon(1e-3));
  CHECK(d.discharge[1] == doctest::Approx(0.5).epsilon(1e-7));
  const double expected = -10.0 * b1 + 50.0 * 0.5 - 10.0 * 0.5;
  CHECK(d.objective == doctest::Approx(expected).epsilon(1e-7));
  CHECK(d.objective == doctest::Approx(19.383).epsilon(1e-4));
  const DispatchSchedule o = dp_oracle_solve(r, s, 1e-4);
  CHECK(std::abs(o.objective - d.objective) < 1e-2);
}

TEST_CASE("solve_dispatch errors") {
  const StorageSpec s = unit_spec(2);
  CHECK_THROWS_AS(solve_dispatch(vec({1, 2, 3}), s), DimensionMismatch);
  StorageSpec bad = s;
  bad.initial_soc = 1.5;
  CHECK_THROWS_AS(solve_dispatch(vec({1, 2}), bad), InfeasibleSpec);
  SolveOptions opt;
  opt.max_iterations = 1;
  opt.polish = false;
  std::mt19937_64 rng(3);
  CHECK_THROWS_AS(solve_dispatch(random_reward(rng, 2), dfl::testing::behavior_spec(2), opt), NonConvergence);
  SolveOptions zero_tol;
  zero_tol.tolerance = 0.0;
  CHECK_THROWS_AS(solve_dispatch(vec({1, 2}), s, zero_tol), InvalidArgument);
}

TEST_CASE("dispatch_cost evaluates the cost polynomial") {
  StorageSpec s = unit_spec(1);
  CHECK(dispatch_cost(vec({0}), vec({0}), s) == 0.0);
  s.cost_c1 = 5;
  s.cost_c2 = 5;
  CHECK(dispatch_cost(vec({0.5}), vec({0}), s) == doctest::Approx(3.75));
  s = unit_spec(1);
  s.cost_c1 = 10;
  s.cost_c3 = 2;
  s.cost_c4 = 1;
  CHECK(dispatch_cost(vec({0.45}), vec({0.2}), s) == doctest::Approx(4.94));
  CHECK_THROWS_AS(dispatch_cost(vec({0.1, 0.2}), vec({0.1}), unit_spec(2)), DimensionMismatch);
}

TEST_CASE("objective_value is revenue minus cost") {
  const StorageSpec s = unit_spec(2);
  CHECK(objective_value(vec({1, 5}), vec({0, 1}), vec({1, 0}), s) == doctest::Approx(4.0));
  CHECK(objective_value(vec({1, 5}), vec({0, 0}), vec({0, 0}), s) == 0.0);
  StorageSpec c = unit_spec(1, 1.0);
  c.cost_c1 = 10;
  CHECK(objective_value(vec({50}), vec({0.5}), vec({0}), c) == doctest::Approx(20.0));
  CHECK_THROWS_AS(objective_value(vec({1}), vec({0, 1}), vec({1, 0}), s), DimensionMismatch);
}

TEST_CASE("check_feasible names each violation") {
  const StorageSpec s = unit_spec(2, 0.5);
  CHECK(check_feasible(solve_dispatch(vec({1, 5}), s), s, 1e-6).empty());

  DispatchSchedule over = make_schedule(vec({1, 5}), vec({0.5, 0}), vec({0, 0}), s);
  over.discharge[0] = 1.1;
  over.soc = soc_trajectory(over.discharge, over.charge, s);
  const auto v = check_feasible(over, s, 1e-6);
  bool found = false;
  for (const Violation& x : v)
    if (x.constraint == "discharge upper bound") {
      found = true;
      CHECK(x.time_index == 1);
      CHECK(x.magnitude == doctest::Approx(0.1));
    }
  CHECK(found);

  // Discharging 0.51 from e0 = 0.5 ends at -0.01.
  const StorageSpec one = unit_spec(1, 0.5);
  const DispatchSchedule low = make_schedule(vec({1}), vec({0.51}), vec({0}), one);
  const auto w = check_feasible(low, one, 1e-6);
  REQUIRE(w.size() == 1);
  CHECK(w[0].constraint == "SoC lower bound");
  CHECK(w[0].time_index == 1);
  CHECK(w[0].magnitude == doctest::Approx(0.01));

  DispatchSchedule drift = solve_dispatch(vec({1, 5}), s);
  drift.soc[1] += 0.2;
  bool dyn = false;
  for (const Violation& x : check_feasible(drift, s, 1e-6)) dyn = dyn || x.constraint == "SoC dynamics";
  CHECK(dyn);
}

TEST_CASE("grid oracle examples") {
  CHECK(std::abs(dp_oracle_solve(vec({1, 5}), unit_spec(2), 1e-3).objective - 4.0) < 1e-2);
  CHECK(std::abs(dp_oracle_solve(vec({7, 7, 7, 7}), unit_spec(4, 0.0), 1e-3).objective) < 1e-9);
  const DispatchSchedule one = dp_oracle_solve(vec({10}), unit_spec(1, 1.0), 1e-3);
  CHECK(one.objective == doctest::Approx(10.0));
  CHECK(one.discharge[0] == doctest::Approx(1.0));
  OracleOptions small;
  small.max_cells = 1000;
  CHECK_THROWS_AS(dp_oracle_solve(vec({1, 5}), unit_spec(2), 1e-4, small), ResourceLimit);
  CHECK_THROWS_AS(dp_oracle_solve(vec({1, 5}), unit_spec(2), 0.0), InvalidArgument);
}

TEST_CASE("interior point agrees with the grid oracle on random instances") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 60; ++i) {
    const int T = 1 + static_cast<int>(rng() % 8);
    const StorageSpec s = random_spec(rng, T);
    const Vector r = random_reward(rng, T);
    const DispatchSchedule a = solve_dispatch(r, s);
    const DispatchSchedule b = dp_oracle_solve(r, s, 1e-3 * s.capacity);
    CAPTURE(i);
    CHECK(std::abs(a.objective - b.objective) <= std::max(1e-2, 1e-2 * std::abs(a.objective)));
    // The grid restricts the feasible set, so it can never beat the exact optimum.
    CHECK(b.objective <= a.objective + 1e-6 * (1.0 + std::abs(a.objective)));
  }
}

TEST_CASE("solutions are feasible, consistent and respect the negative-price rule") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    const int T = 1 + static_cast<int>(rng() % 48);
    const StorageSpec s = random_spec(rng, T);
    const Vector r = random_reward(rng, T);
    for (bool idle : {false, true}) {
      SolveOptions opt;
      opt.prefer_idle = idle;
      const DispatchSchedule d = solve_dispatch(r, s, opt);
      CAPTURE(i);
      CHECK(check_feasible(d, s, 1e-6).empty());
      CHECK(d.objective == doctest::Approx(objective_value(r, d.discharge, d.charge, s)).epsilon(1e-12));
      CHECK(((d.discharge - d.charge) - d.net).cwiseAbs().maxCoeff() == 0.0);
      for (int t = 0; t < T; ++t)
        if (r[t] < 0.0) CHECK(d.discharge[t] == 0.0);
    }
  }
}

TEST_CASE("no single-coordinate move improves the returned schedule") {
  std::mt19937_64 rng(31);
  const double tol = SolveOptions{}.tolerance;
  for (int i = 0; i < 60; ++i) {
    const int T = 1 + static_cast<int>(rng() % 12);
    const StorageSpec s = random_spec(rng, T);
    const Vector r = random_reward(rng, T);
    const DispatchSchedule d = solve_dispatch(r, s);
    const double slack = 1e-6 + tol * (1.0 + std::abs(d.objective));
    for (int t = 0; t < T; ++t) {
      for (int which = 0; which < 2; ++which) {
        if (which == 0 && r[t] < 0.0) continue;  // p_t is pinned at zero there
        for (double step : {1e-3, -1e-3}) {
          // Re-project by shrinking the move until the schedule is feasible.
          for (double scale = 1.0; scale > 1e-6; scale *= 0.5) {
            Vector p = d.discharge, b = d.charge;
            Vector& x = which == 0 ? p : b;
            x[t] = std::clamp(x[t] + scale * step, 0.0, s.power_rating);
            const DispatchSchedule moved = make_schedule(r, p, b, s);
            if (!check_feasible(moved, s, 1e-12).empty()) continue;
            CAPTURE(i);
            CHECK(moved.objective <= d.objective + slack);
            break;
          }
        }
      }
    }
  }
}

TEST_CASE("doubling prices doubles the value without costs") {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 50; ++i) {
    const int T = 1 + static_cast<int>(rng() % 24);
    StorageSpec s = random_spec(rng, T);
    s.cost_c1 = s.cost_c2 = s.cost_c3 = s.cost_c4 = 0.0;
    const Vector r = random_reward(rng, T);
    const double v1 = solve_dispatch(r, s).objective;
    const double v2 = solve_dispatch(2.0 * r, s).objective;
    CHECK(v2 == doctest::Approx(2.0 * v1).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("terminal SoC floor is honored") {
  StorageSpec s = unit_spec(3, 0.5);
  const Vector r = vec({1, 2, 30});
  CHECK(solve_dispatch(r, s).soc[2] == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  s.terminal_soc_min = 0.4;
  const DispatchSchedule d = solve_dispatch(r, s);
  CHECK(d.soc[2] >= 0.4 - 1e-7);
  CHECK(std::abs(dp_oracle_solve(r, s, 1e-3).objective - d.objective) < 1e-2);
  s.terminal_soc_min = 2.0;
  CHECK_THROWS_AS(solve_dispatch(r, s), InfeasibleSpec);
}

TEST_CASE("idle preference returns exact zeros on flat prices") {
  StorageSpec s = unit_spec(24, 0.0);
  SolveOptions opt;
  opt.prefer_idle = true;
  const DispatchSchedule d = solve_dispatch(Vector::Constant(24, 30.0), s, opt);
  CHECK(d.net.cwiseAbs().maxCoeff() == 0.0);
  CHECK(d.objective == 0.0);
}

TEST_CASE("solve is deterministic") {
  std::mt19937_64 rng(51);
  const StorageSpec s = random_spec(rng, 24);
  const Vector r = random_reward(rng, 24);
  const DispatchSchedule a = solve_dispatch(r, s), b = solve_dispatch(r, s);
  CHECK(a.net == b.net);
  CHECK(a.objective == b.objective);
}

TEST_CASE("step length scales energy per step") {
  StorageSpec s = unit_spec(2);
  s.step_hours = 0.5;
  s.capacity = 0.5;
  const DispatchSchedule d = solve_dispatch(vec({1, 5}), s);
  CHECK(d.net[0] == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(d.objective == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(d.soc[0] == doctest::Approx(0.5).epsilon(1e-7));
}
