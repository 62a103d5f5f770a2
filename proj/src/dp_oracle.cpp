#include "dfl/storage_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dfl {
namespace {

struct Split {
  bool feasible = false;
  double reward = -std::numeric_limits<double>::infinity();
  double p = 0.0;
  double b = 0.0;
};

// Best (p, b) realizing the SoC change `delta_e` in one step.
Split best_split(double delta_e, double price, const StorageSpec& s) {
  const double dh = s.step_hours, eta = s.efficiency, cap = s.power_rating;
  const double delta = delta_e / dh;
  const double eps = 1e-12 * (1.0 + cap);
  auto value = [&](double p, double b) {
    return dh * price * (p - b) - (s.cost_c1 * dh * p + s.cost_c2 * dh * dh * p * p + s.cost_c3 * dh * b +
                                   s.cost_c4 * dh * dh * b * b);
  };
  Split out;
  if (price < 0.0) {
    const double b = delta / eta;
    if (b < -eps || b > cap + eps) return out;
    const double bc = std::clamp(b, 0.0, cap);
    return {true, value(0.0, bc), 0.0, bc};
  }
  const double lo = std::max(0.0, delta / eta);
  const double hi = std::min(cap, (cap + eta * delta) / (eta * eta));
  if (lo > hi + eps) return out;
  const double hi_c = std::max(lo, hi);
  auto p_of = [&](double b) { return std::max(0.0, eta * eta * b - eta * delta); };

  const double curvature = -2.0 * s.cost_c2 * dh * dh * std::pow(eta, 4) - 2.0 * s.cost_c4 * dh * dh;
  const double slope0 = dh * price * (eta * eta - 1.0) - s.cost_c1 * dh * eta * eta +
                        2.0 * s.cost_c2 * dh * dh * std::pow(eta, 3) * delta - s.cost_c3 * dh;
  double b = lo;
  if (curvature < 0.0) {
    b = std::clamp(-slope0 / curvature, lo, hi_c);
  } else if (slope0 > 0.0) {
    b = hi_c;
  }
  const double p = std::min(cap, p_of(b));
  return {true, value(p, b), p, b};
}

}  // namespace

DispatchSchedule dp_oracle_solve(const Vector& reward, const StorageSpec& spec, double resolution,
                                 const OracleOptions& options) {
  spec.validate();
  if (reward.size() != spec.horizon) throw DimensionMismatch("reward length does not match horizon");
  if (!(resolution > 0.0)) throw InvalidArgument("grid resolution must be > 0");

  const int cells = static_cast<int>(std::ceil(spec.capacity / resolution - 1e-9));
  const int states = cells + 1;
  const int horizon = spec.horizon;
  if (static_cast<double>(states) * horizon > options.max_cells) {
    std::ostringstream os;
    os << "SoC grid of " << states << " states over " << horizon << " steps exceeds the cell cap "
       << options.max_cells;
    throw ResourceLimit(os.str());
  }
  const double step = spec.capacity / cells;
  auto level = [&](int j) { return j == cells ? spec.capacity : j * step; };

  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> value(states, ninf), next(states);
  std::vector<int> parent(static_cast<std::size_t>(horizon) * states, -1);

  for (int j = 0; j < states; ++j) {
    const Split sp = best_split(level(j) - spec.initial_soc, reward[0], spec);
    if (sp.feasible) value[j] = sp.reward;
  }

  const double up = spec.power_rating * spec.efficiency * spec.step_hours;
  const double down = spec.power_rating / spec.efficiency * spec.step_hours;
  const int k_up = std::min(cells, static_cast<int>(std::floor(up / step + 1e-9)));
  const int k_down = std::min(cells, static_cast<int>(std::floor(down / step + 1e-9)));
  std::vector<double> gain(k_up + k_down + 1);

  for (int t = 1; t + 1 < horizon; ++t) {
    for (int k = -k_down; k <= k_up; ++k) {
      const Split sp = best_split(k * step, reward[t], spec);
      gain[k + k_down] = sp.feasible ? sp.reward : ninf;
    }
    int* par = parent.data() + static_cast<std::size_t>(t) * states;
    for (int j = 0; j < states; ++j) {
      double best = ninf;
      int arg = -1;
      const int k_lo = std::max(-k_down, j - cells);
      const int k_hi = std::min(k_up, j);
      for (int k = k_lo; k <= k_hi; ++k) {
        const double v = value[j - k] + gain[k + k_down];
        if (v > best) {
          best = v;
          arg = j - k;
        }
      }
      next[j] = best;
      par[j] = arg;
    }
    value.swap(next);
  }

  // The final SoC is free, so the last transition is optimized over a
  // continuum: the best-split value is concave in the SoC change, which a
  // golden-section search resolves to round-off.
  const double terminal = spec.terminal_soc_min.value_or(0.0);
  const int last = horizon - 1;
  auto last_step = [&](double from) -> std::pair<double, double> {
    double lo = std::max(terminal, std::max(0.0, from - down)) - from;
    // No discharge at a negative price, so the SoC cannot drop.
    if (reward[last] < 0.0) lo = std::max(lo, 0.0);
    double hi = std::min(spec.capacity, from + up) - from;
    if (lo > hi) return {ninf, 0.0};
    auto f = [&](double de) { return best_split(de, reward[last], spec).reward; };
    const double ratio = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double x1 = b - ratio * (b - a), x2 = a + ratio * (b - a);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 200 && b - a > 1e-13 * (1.0 + spec.capacity); ++it) {
      if (f1 < f2) {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + ratio * (b - a);
        f2 = f(x2);
      } else {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - ratio * (b - a);
        f1 = f(x1);
      }
    }
    double best_de = 0.5 * (a + b), best = f(best_de);
    for (double cand : {lo, hi}) {
      const double v = f(cand);
      if (v > best) {
        best = v;
        best_de = cand;
      }
    }
    return {best, best_de};
  };

  std::vector<double> levels(horizon);
  if (horizon == 1) {
    auto [v, de] = last_step(spec.initial_soc);
    if (v == ninf) throw InfeasibleSpec("no feasible terminal SoC");
    levels[0] = spec.initial_soc + de;
  } else {
    // `value` holds the best value of reaching each grid level after T-1 steps.
    int end = -1;
    double best = ninf, best_de = 0.0;
    for (int j = 0; j < states; ++j) {
      if (value[j] == ninf) continue;
      auto [v, de] = last_step(level(j));
      if (v == ninf) continue;
      if (value[j] + v > best) {
        best = value[j] + v;
        best_de = de;
        end = j;
      }
    }
    if (end < 0) throw InfeasibleSpec("no feasible SoC path on the oracle grid");
    std::vector<int> path(horizon - 1);
    path[horizon - 2] = end;
    for (int t = horizon - 2; t > 0; --t)
      path[t - 1] = parent[static_cast<std::size_t>(t) * states + path[t]];
    for (int t = 0; t < horizon - 1; ++t) levels[t] = level(path[t]);
    levels[last] = level(end) + best_de;
  }

  Vector p(horizon), b(horizon);
  double prev = spec.initial_soc;
  for (int t = 0; t < horizon; ++t) {
    const Split sp = best_split(levels[t] - prev, reward[t], spec);
    p[t] = sp.p;
    b[t] = sp.b;
    prev = levels[t];
  }
  return make_schedule(reward, p, b, spec);
}

}  // namespace dfl
