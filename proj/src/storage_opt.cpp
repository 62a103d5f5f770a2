#include "dfl/storage_opt.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dfl {

void StorageSpec::validate() const {
  auto bad = [](const std::string& what) { throw InvalidArgument("invalid storage spec: " + what); };
  if (!(power_rating > 0.0) || !std::isfinite(power_rating)) bad("power_rating must be > 0");
  if (!(capacity > 0.0) || !std::isfinite(capacity)) bad("capacity must be > 0");
  if (!(efficiency > 0.0 && efficiency <= 1.0)) bad("efficiency must lie in (0, 1]");
  if (horizon < 1) bad("horizon must be >= 1");
  if (!(step_hours > 0.0) || !std::isfinite(step_hours)) bad("step_hours must be > 0");
  if (!(cost_c1 >= 0.0 && cost_c2 >= 0.0 && cost_c3 >= 0.0 && cost_c4 >= 0.0))
    bad("cost coefficients must be >= 0");
  if (!(initial_soc >= 0.0 && initial_soc <= capacity)) {
    std::ostringstream os;
    os << "initial_soc " << initial_soc << " outside [0, " << capacity << "]";
    throw InfeasibleSpec(os.str());
  }
  if (terminal_soc_min) {
    const double reachable =
        std::min(capacity, initial_soc + horizon * power_rating * efficiency * step_hours);
    if (*terminal_soc_min > reachable) {
      std::ostringstream os;
      os << "terminal_soc_min " << *terminal_soc_min << " unreachable (max " << reachable << ")";
      throw InfeasibleSpec(os.str());
    }
  }
}

namespace {

void require_length(Eigen::Index got, const StorageSpec& spec, const char* what) {
  if (got != spec.horizon) {
    std::ostringstream os;
    os << what << " has length " << got << ", horizon is " << spec.horizon;
    throw DimensionMismatch(os.str());
  }
}

// min 1/2 x'Hx + c'x  s.t.  G x <= h, with x = [p; b] and the SoC rows kept
// implicit through prefix/suffix sums.
class StorageQp {
 public:
  StorageQp(const StorageSpec& spec, const Vector& reward)
      : t_(spec.horizon),
        n_(2 * spec.horizon),
        dh_(spec.step_hours),
        eta_(spec.efficiency),
        power_(spec.power_rating),
        fixed_(n_, false),
        hdiag_(Vector::Zero(n_)),
        c_(n_) {
    const double dh2 = dh_ * dh_;
    for (int t = 0; t < t_; ++t) {
      fixed_[t] = reward[t] < 0.0;
      c_[t] = (spec.cost_c1 - reward[t]) * dh_;
      c_[t_ + t] = (spec.cost_c3 + reward[t]) * dh_;
      hdiag_[t] = 2.0 * spec.cost_c2 * dh2;
      hdiag_[t_ + t] = 2.0 * spec.cost_c4 * dh2;
    }
    for (int i = 0; i < n_; ++i)
      if (!fixed_[i]) free_.push_back(i);
    soc_upper_ = Vector::Constant(t_, spec.capacity - spec.initial_soc);
    soc_lower_ = Vector::Constant(t_, spec.initial_soc);
    if (spec.terminal_soc_min)
      soc_lower_[t_ - 1] = spec.initial_soc - std::max(0.0, *spec.terminal_soc_min);
  }

  void set_linear_cost(const Vector& c) { c_ = c; }
  void set_quadratic(const Vector& hdiag) { hdiag_ = hdiag; }
  void add_row(const Vector& a, double rhs) {
    extra_rows_.push_back(a);
    extra_rhs_.push_back(rhs);
  }

  int n() const { return n_; }
  int m() const { return 2 * nfree() + 2 * t_ + static_cast<int>(extra_rows_.size()); }
  int nfree() const { return static_cast<int>(free_.size()); }
  bool fixed(int i) const { return fixed_[i]; }
  const Vector& c() const { return c_; }
  const Vector& hdiag() const { return hdiag_; }

  double objective(const Vector& x) const { return 0.5 * x.dot(hdiag_.cwiseProduct(x)) + c_.dot(x); }

  Vector rhs() const {
    Vector h(m());
    int r = 0;
    for (int k = 0; k < nfree(); ++k) {
      h[r++] = power_;
      h[r++] = 0.0;
    }
    h.segment(r, t_) = soc_upper_;
    h.segment(r + t_, t_) = soc_lower_;
    r += 2 * t_;
    for (double v : extra_rhs_) h[r++] = v;
    return h;
  }

  // SoC change accumulated up to each step.
  Vector cumulative(const Vector& x) const {
    Vector out(t_);
    double acc = 0.0;
    for (int t = 0; t < t_; ++t) {
      acc += dh_ * (-x[t] / eta_ + eta_ * x[t_ + t]);
      out[t] = acc;
    }
    return out;
  }

  Vector apply(const Vector& x) const {
    Vector g(m());
    int r = 0;
    for (int i : free_) {
      g[r++] = x[i];
      g[r++] = -x[i];
    }
    const Vector cum = cumulative(x);
    g.segment(r, t_) = cum;
    g.segment(r + t_, t_) = -cum;
    r += 2 * t_;
    for (const auto& a : extra_rows_) g[r++] = a.dot(x);
    return g;
  }

  Vector apply_transpose(const Vector& v) const {
    Vector out = Vector::Zero(n_);
    int r = 0;
    for (int i : free_) {
      out[i] += v[r] - v[r + 1];
      r += 2;
    }
    double suffix = 0.0;
    for (int t = t_ - 1; t >= 0; --t) {
      suffix += v[r + t] - v[r + t_ + t];
      out[t] += -dh_ / eta_ * suffix;
      out[t_ + t] += dh_ * eta_ * suffix;
    }
    r += 2 * t_;
    for (const auto& a : extra_rows_) out += v[r++] * a;
    for (int i = 0; i < n_; ++i)
      if (fixed_[i]) out[i] = 0.0;
    return out;
  }

  // H + G' diag(d) G, with fixed variables pinned through identity rows.
  Eigen::MatrixXd normal_matrix(const Vector& d) const {
    Eigen::MatrixXd nm = Eigen::MatrixXd::Zero(n_, n_);
    nm.diagonal() = hdiag_;
    int r = 0;
    for (int i : free_) {
      nm(i, i) += d[r] + d[r + 1];
      r += 2;
    }
    Vector suffix(t_);
    double acc = 0.0;
    for (int t = t_ - 1; t >= 0; --t) {
      acc += d[r + t] + d[r + t_ + t];
      suffix[t] = acc;
    }
    const double kp = dh_ / eta_, kb = dh_ * eta_;
    for (int i = 0; i < t_; ++i) {
      for (int j = 0; j < t_; ++j) {
        const double s = suffix[std::max(i, j)];
        nm(i, j) += kp * kp * s;
        nm(i, t_ + j) += -kp * kb * s;
        nm(t_ + i, j) += -kp * kb * s;
        nm(t_ + i, t_ + j) += kb * kb * s;
      }
    }
    r += 2 * t_;
    for (const auto& a : extra_rows_) nm.noalias() += d[r++] * a * a.transpose();
    for (int i = 0; i < n_; ++i) {
      if (!fixed_[i]) continue;
      nm.row(i).setZero();
      nm.col(i).setZero();
      nm(i, i) = 1.0;
    }
    return nm;
  }

  // Dense copy of G restricted to the given rows.
  Eigen::MatrixXd dense_rows(const std::vector<int>& rows) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), n_);
    const int nb = 2 * nfree();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const int r = rows[k];
      if (r < nb) {
        out(k, free_[r / 2]) = (r % 2 == 0) ? 1.0 : -1.0;
      } else if (r < nb + 2 * t_) {
        const int t = (r - nb) % t_;
        const double sign = (r - nb) < t_ ? 1.0 : -1.0;
        for (int s = 0; s <= t; ++s) {
          out(k, s) = sign * (-dh_ / eta_);
          out(k, t_ + s) = sign * dh_ * eta_;
        }
      } else {
        out.row(k) = extra_rows_[r - nb - 2 * t_].transpose();
      }
    }
    return out;
  }

  Vector initial_point() const {
    Vector x = Vector::Zero(n_);
    for (int i : free_) x[i] = 0.25 * power_;
    return x;
  }

 private:
  int t_;
  int n_;
  double dh_;
  double eta_;
  double power_;
  std::vector<bool> fixed_;
  std::vector<int> free_;
  Vector hdiag_;
  Vector c_;
  Vector soc_upper_;
  Vector soc_lower_;
  std::vector<Vector> extra_rows_;
  std::vector<double> extra_rhs_;
};

struct IpmResult {
  Vector x;
  Vector s;
  Vector z;
  int iterations = 0;
};

double max_step(const Vector& v, const Vector& dv) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0.0) alpha = std::min(alpha, -v[i] / dv[i]);
  return alpha;
}

IpmResult run_ipm(const StorageQp& qp, const SolveOptions& opt) {
  const int n = qp.n();
  const int m = qp.m();
  const Vector h = qp.rhs();
  const double hscale = 1.0 + h.lpNorm<Eigen::Infinity>();
  const double cscale = 1.0 + qp.c().lpNorm<Eigen::Infinity>();

  Vector x = qp.initial_point();
  Vector s = (h - qp.apply(x)).cwiseMax(1.0);
  Vector z = Vector::Constant(m, std::max(1.0, std::sqrt(cscale)));

  auto residual_dual = [&](const Vector& xx, const Vector& zz) {
    Vector rd = qp.hdiag().cwiseProduct(xx) + qp.c() + qp.apply_transpose(zz);
    for (int i = 0; i < n; ++i)
      if (qp.fixed(i)) rd[i] = 0.0;
    return rd;
  };

  for (int it = 0; it < opt.max_iterations; ++it) {
    const Vector rp = qp.apply(x) + s - h;
    const Vector rd = residual_dual(x, z);
    const double gap = s.dot(z);
    const double mu = gap / m;
    const double pobj = qp.objective(x);
    const double rp_norm = rp.lpNorm<Eigen::Infinity>();
    const double rd_norm = rd.lpNorm<Eigen::Infinity>();
    const double gap_goal = opt.tolerance * (1.0 + std::abs(pobj));
    if (!std::isfinite(rp_norm) || !std::isfinite(rd_norm) || !std::isfinite(gap)) break;
    if (rp_norm <= 1e-10 * hscale && rd_norm <= 1e-8 * cscale && gap <= gap_goal) return {x, s, z, it};
    // Round-off floor: the gap cannot shrink further, accept a slightly
    // larger dual residual rather than iterate on noise.
    if (rp_norm <= 1e-10 * hscale && rd_norm <= 1e-6 * cscale && gap <= 1e-6 * gap_goal)
      return {x, s, z, it};

    const Vector d = z.cwiseQuotient(s);
    Eigen::MatrixXd nm = qp.normal_matrix(d);
    nm.diagonal() *= 1.0 + 1e-14;
    Eigen::LLT<Eigen::MatrixXd> llt(nm);
    if (llt.info() != Eigen::Success) break;

    auto newton = [&](const Vector& rc, Vector& dx, Vector& ds, Vector& dz) {
      Vector rhs = -rd + qp.apply_transpose((rc - z.cwiseProduct(rp)).cwiseQuotient(s));
      for (int i = 0; i < n; ++i)
        if (qp.fixed(i)) rhs[i] = 0.0;
      dx = llt.solve(rhs);
      ds = -rp - qp.apply(dx);
      dz = (-rc - z.cwiseProduct(ds)).cwiseQuotient(s);
      // With z/s spanning many decades the normal equations lose digits;
      // refine against the unreduced dual equation. One pass is not always
      // enough once some slacks reach round-off.
      for (int pass = 0; pass < 3; ++pass) {
        Vector r1 = rd + qp.hdiag().cwiseProduct(dx) + qp.apply_transpose(dz);
        for (int i = 0; i < n; ++i)
          if (qp.fixed(i)) r1[i] = 0.0;
        const Vector cx = llt.solve(-r1);
        const Vector cs = -qp.apply(cx);
        dx += cx;
        ds += cs;
        dz -= z.cwiseProduct(cs).cwiseQuotient(s);
      }
    };

    Vector dx, ds, dz;
    const Vector sz = s.cwiseProduct(z);
    newton(sz, dx, ds, dz);
    const double alpha_aff = std::min(max_step(s, ds), max_step(z, dz));
    const double mu_aff = (s + alpha_aff * ds).dot(z + alpha_aff * dz) / m;
    const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

    const Vector rc = sz + ds.cwiseProduct(dz) - Vector::Constant(m, sigma * mu);
    newton(rc, dx, ds, dz);
    const double alpha = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz)));
    if (!(alpha > 1e-14)) break;
    x += alpha * dx;
    s += alpha * ds;
    z += alpha * dz;
    for (int i = 0; i < n; ++i)
      if (qp.fixed(i)) x[i] = 0.0;
  }
  std::ostringstream os;
  os << "interior-point solver did not reach tolerance " << opt.tolerance << " within "
     << opt.max_iterations << " iterations";
  throw NonConvergence(os.str());
}

// Re-solves the equality-constrained QP on the active set identified by the
// interior-point iterate, with a small proximal term so that directions left
// free by a degenerate LP stay at the interior-point values.
std::optional<Vector> polish(const StorageQp& qp, const IpmResult& ipm) {
  const int n = qp.n();
  const Vector h = qp.rhs();
  std::vector<int> active;
  for (Eigen::Index i = 0; i < ipm.s.size(); ++i)
    if (ipm.s[i] < ipm.z[i]) active.push_back(static_cast<int>(i));

  std::vector<int> cols;
  for (int i = 0; i < n; ++i)
    if (!qp.fixed(i)) cols.push_back(i);
  const int nf = static_cast<int>(cols.size());
  if (nf == 0) return Vector::Zero(n);

  const Eigen::MatrixXd g_full = qp.dense_rows(active);
  Eigen::MatrixXd ga(g_full.rows(), nf);
  for (int k = 0; k < nf; ++k) ga.col(k) = g_full.col(cols[k]);
  Vector ha(static_cast<Eigen::Index>(active.size()));
  for (std::size_t k = 0; k < active.size(); ++k) ha[k] = h[active[k]];

  Vector xi(nf), cf(nf), hf(nf);
  for (int k = 0; k < nf; ++k) {
    xi[k] = ipm.x[cols[k]];
    cf[k] = qp.c()[cols[k]];
    hf[k] = qp.hdiag()[cols[k]];
  }
  const double delta = 1e-7;

  Vector xp;
  Eigen::MatrixXd null_basis;
  if (ga.rows() == 0) {
    xp = Vector::Zero(nf);
    null_basis = Eigen::MatrixXd::Identity(nf, nf);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ga.transpose());
    qr.setThreshold(1e-10);
    const Eigen::Index rank = qr.rank();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(ga);
    cod.setThreshold(1e-10);
    xp = cod.solve(ha);
    if ((ga * xp - ha).lpNorm<Eigen::Infinity>() > 1e-9 * (1.0 + ha.lpNorm<Eigen::Infinity>()))
      return std::nullopt;
    const Eigen::MatrixXd q = qr.householderQ();
    null_basis = q.rightCols(nf - rank);
  }
  Vector x_free = xp;
  if (null_basis.cols() > 0) {
    const Vector hd = hf.array() + delta;
    const Eigen::MatrixXd reduced = null_basis.transpose() * hd.asDiagonal() * null_basis;
    const Vector grad = hd.cwiseProduct(xp) + cf - delta * xi;
    const Vector w = reduced.ldlt().solve(-(null_basis.transpose() * grad));
    x_free += null_basis * w;
  }
  Vector x = Vector::Zero(n);
  for (int k = 0; k < nf; ++k) x[cols[k]] = x_free[k];

  const Vector viol = qp.apply(x) - h;
  if (viol.maxCoeff() > 1e-10 * (1.0 + h.lpNorm<Eigen::Infinity>())) return std::nullopt;
  const double f_ipm = qp.objective(ipm.x);
  const double f_pol = qp.objective(x);
  if (f_pol > f_ipm + 1e-9 * (1.0 + std::abs(f_ipm))) return std::nullopt;
  return x;
}

Vector solve_qp(const StorageQp& qp, const SolveOptions& opt) {
  IpmResult ipm = run_ipm(qp, opt);
  if (opt.polish) {
    if (auto refined = polish(qp, ipm)) return *refined;
  }
  return ipm.x;
}

DispatchSchedule to_schedule(const Vector& x, const Vector& reward, const StorageSpec& spec) {
  const int t = spec.horizon;
  Vector p = x.head(t).cwiseMax(0.0).cwiseMin(spec.power_rating);
  Vector b = x.tail(t).cwiseMax(0.0).cwiseMin(spec.power_rating);
  for (int i = 0; i < t; ++i)
    if (reward[i] < 0.0) p[i] = 0.0;
  return make_schedule(reward, p, b, spec);
}

// Zero (p_t, b_t) pairs whose removal keeps feasibility and leaves the
// objective unchanged to 1e-9 relative, below what the solver resolves.
void zero_idle_pairs(DispatchSchedule& sched, const Vector& reward, const StorageSpec& spec) {
  for (int t = 0; t < spec.horizon; ++t) {
    if (sched.discharge[t] == 0.0 && sched.charge[t] == 0.0) continue;
    Vector p = sched.discharge, b = sched.charge;
    p[t] = 0.0;
    b[t] = 0.0;
    DispatchSchedule cand = make_schedule(reward, p, b, spec);
    if (std::abs(cand.objective - sched.objective) < 1e-9 * (1.0 + std::abs(sched.objective)) &&
        check_feasible(cand, spec, 1e-9).empty())
      sched = std::move(cand);
  }
}

}  // namespace

DispatchSchedule make_schedule(const Vector& reward, const Vector& discharge, const Vector& charge,
                               const StorageSpec& spec) {
  DispatchSchedule s;
  s.discharge = discharge;
  s.charge = charge;
  s.soc = soc_trajectory(discharge, charge, spec);
  s.net = discharge - charge;
  s.objective = objective_value(reward, discharge, charge, spec);
  return s;
}

DispatchSchedule schedule_from_net(const Vector& net, const StorageSpec& spec) {
  require_length(net.size(), spec, "net dispatch");
  DispatchSchedule s;
  s.discharge = net.cwiseMax(0.0);
  s.charge = (-net).cwiseMax(0.0);
  s.soc = soc_trajectory(s.discharge, s.charge, spec);
  s.net = net;
  s.objective = 0.0;
  return s;
}

DispatchSchedule solve_dispatch(const Vector& reward, const StorageSpec& spec, const SolveOptions& options) {
  spec.validate();
  require_length(reward.size(), spec, "reward");
  if (!(options.tolerance > 0.0)) throw InvalidArgument("solver tolerance must be > 0");
  if (!reward.allFinite()) throw InvalidArgument("reward contains non-finite entries");

  StorageQp qp(spec, reward);
  DispatchSchedule sched = to_schedule(solve_qp(qp, options), reward, spec);

  if (options.prefer_idle) {
    if (spec.linear_costs()) {
      // Second stage: least throughput subject to staying optimal.
      const double target = sched.objective - 1e-9 * (1.0 + std::abs(sched.objective));
      StorageQp idle(spec, reward);
      idle.add_row(qp.c(), -target);  // -(objective) <= -target
      Vector through = Vector::Ones(qp.n());
      idle.set_linear_cost(through);
      idle.set_quadratic(Vector::Zero(qp.n()));
      try {
        DispatchSchedule cand = to_schedule(solve_qp(idle, options), reward, spec);
        if (cand.objective >= target - 1e-9 * (1.0 + std::abs(target)) &&
            check_feasible(cand, spec, 1e-9).empty())
          sched = std::move(cand);
      } catch (const NonConvergence&) {
        // keep the first-stage schedule
      }
    }
    zero_idle_pairs(sched, reward, spec);
  }
  return sched;
}

double dispatch_cost(const Vector& p, const Vector& b, const StorageSpec& spec) {
  require_length(p.size(), spec, "discharge");
  require_length(b.size(), spec, "charge");
  const Vector qp = p * spec.step_hours;
  const Vector qb = b * spec.step_hours;
  return spec.cost_c1 * qp.sum() + spec.cost_c2 * qp.squaredNorm() + spec.cost_c3 * qb.sum() +
         spec.cost_c4 * qb.squaredNorm();
}

double dispatch_cost(const DispatchSchedule& schedule, const StorageSpec& spec) {
  return dispatch_cost(schedule.discharge, schedule.charge, spec);
}

double objective_value(const Vector& reward, const Vector& p, const Vector& b, const StorageSpec& spec) {
  require_length(reward.size(), spec, "reward");
  return spec.step_hours * reward.dot(p - b) - dispatch_cost(p, b, spec);
}

double objective_value(const Vector& reward, const DispatchSchedule& schedule, const StorageSpec& spec) {
  return objective_value(reward, schedule.discharge, schedule.charge, spec);
}

Vector soc_trajectory(const Vector& p, const Vector& b, const StorageSpec& spec) {
  require_length(p.size(), spec, "discharge");
  require_length(b.size(), spec, "charge");
  Vector e(spec.horizon);
  double acc = spec.initial_soc;
  for (int t = 0; t < spec.horizon; ++t) {
    acc += spec.step_hours * (-p[t] / spec.efficiency + b[t] * spec.efficiency);
    e[t] = acc;
  }
  return e;
}

std::vector<Violation> check_feasible(const DispatchSchedule& schedule, const StorageSpec& spec,
                                      double slack) {
  require_length(schedule.discharge.size(), spec, "discharge");
  require_length(schedule.charge.size(), spec, "charge");
  require_length(schedule.soc.size(), spec, "soc");
  require_length(schedule.net.size(), spec, "net");
  std::vector<Violation> out;
  auto report = [&](const char* name, int t, double amount) {
    if (amount > slack) out.push_back({name, t + 1, amount});
  };
  const double cap = spec.power_rating;
  double prev = spec.initial_soc;
  for (int t = 0; t < spec.horizon; ++t) {
    const double p = schedule.discharge[t], b = schedule.charge[t], e = schedule.soc[t];
    report("discharge lower bound", t, -p);
    report("discharge upper bound", t, p - cap);
    report("charge lower bound", t, -b);
    report("charge upper bound", t, b - cap);
    report("SoC lower bound", t, -e);
    report("SoC upper bound", t, e - spec.capacity);
    const double expected = prev + spec.step_hours * (-p / spec.efficiency + b * spec.efficiency);
    report("SoC dynamics", t, std::abs(e - expected));
    report("net dispatch", t, std::abs(schedule.net[t] - (p - b)));
    prev = e;
  }
  if (spec.terminal_soc_min)
    report("terminal SoC", spec.horizon - 1, *spec.terminal_soc_min - schedule.soc[spec.horizon - 1]);
  return out;
}

}  // namespace dfl
