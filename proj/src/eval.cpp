#include "dfl/eval.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

namespace dfl {
namespace {

struct Matching {
  std::vector<int> actual_to_pred;  // -1 when unmatched
  std::vector<int> pred_to_actual;
};

Matching match_events(const LabelSeq& pred, const LabelSeq& actual, int tol) {
  const int n = static_cast<int>(actual.size());
  Matching m{std::vector<int>(n, -1), std::vector<int>(n, -1)};
  for (int i = 0; i < n; ++i) {
    if (actual[i] == 0) continue;
    int best = -1;
    for (int d = 0; d <= tol && best < 0; ++d) {
      for (int j : {i - d, i + d}) {  // earlier candidate first
        if (j < 0 || j >= n || m.pred_to_actual[j] >= 0 || pred[j] != actual[i]) continue;
        best = j;
        break;
      }
    }
    if (best >= 0) {
      m.actual_to_pred[i] = best;
      m.pred_to_actual[best] = i;
    }
  }
  return m;
}

ConfusionCounts score(const LabelSeq& pred, const LabelSeq& actual, const Matching& m) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] != 0) {
      if (m.actual_to_pred[i] >= 0)
        ++c.tp;
      else if (pred[i] == -actual[i])
        ++c.fp;
      else
        ++c.fn;
    } else if (pred[i] == 0 || m.pred_to_actual[i] >= 0) {
      ++c.tn;
    } else {
      ++c.fp;
    }
  }
  return c;
}

void require_labels(const LabelSeq& pred, const LabelSeq& actual, int tol) {
  if (pred.size() != actual.size()) throw LengthMismatch("prediction and actual label lengths differ");
  if (tol < 0) throw InvalidArgument("tolerance must be >= 0");
  for (const auto* seq : {&pred, &actual})
    for (int v : *seq)
      if (v < -1 || v > 1) throw InvalidArgument("labels must be -1, 0 or 1");
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

LabelSeq classify_events(const Vector& y, double threshold) {
  if (!(threshold > 0.0)) throw InvalidArgument("threshold must be > 0");
  LabelSeq out(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) out[i] = y[i] > threshold ? 1 : (y[i] < -threshold ? -1 : 0);
  return out;
}

ConfusionCounts event_confusion(const LabelSeq& pred, const LabelSeq& actual, int tol) {
  require_labels(pred, actual, tol);
  return score(pred, actual, match_events(pred, actual, tol));
}

ConfusionCounts magnitude_confusion(const Vector& pred_y, const Vector& actual_y, double pct, int tol,
                                    double threshold) {
  if (pred_y.size() != actual_y.size()) throw LengthMismatch("prediction and actual lengths differ");
  if (!(pct > 0.0 && pct <= 1.0)) throw InvalidArgument("pct must lie in (0, 1]");
  const LabelSeq pred = classify_events(pred_y, threshold);
  const LabelSeq actual = classify_events(actual_y, threshold);
  require_labels(pred, actual, tol);
  Matching m = match_events(pred, actual, tol);
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const int j = m.actual_to_pred[i];
    if (j < 0) continue;
    const auto ii = static_cast<Eigen::Index>(i);
    if (std::abs(pred_y[j] - actual_y[ii]) > pct * std::abs(actual_y[ii])) {
      m.actual_to_pred[i] = -1;
      m.pred_to_actual[j] = -1;
    }
  }
  return score(pred, actual, m);
}

MetricsReport prf_metrics(const ConfusionCounts& c) {
  MetricsReport r;
  r.counts = c;
  auto ratio = [&](double num, double den) {
    if (den == 0.0) {
      r.degenerate = true;
      return 0.0;
    }
    return num / den;
  };
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  r.precision = ratio(tp, tp + fp);
  r.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  r.recall = ratio(tp, tp + fn);
  r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

Vector step_profits(const Vector& rtp, const DispatchSchedule& s, const StorageSpec& spec) {
  if (rtp.size() != s.discharge.size() || rtp.size() != s.charge.size())
    throw DimensionMismatch("price and schedule lengths differ");
  const double dh = spec.step_hours;
  Vector out(rtp.size());
  for (Eigen::Index t = 0; t < rtp.size(); ++t) {
    const double qp = s.discharge[t] * dh, qb = s.charge[t] * dh;
    out[t] = rtp[t] * (qp - qb) -
             (spec.cost_c1 * qp + spec.cost_c2 * qp * qp + spec.cost_c3 * qb + spec.cost_c4 * qb * qb);
  }
  return out;
}

double arbitrage_profit(const Vector& rtp, const DispatchSchedule& s, const StorageSpec& spec) {
  return step_profits(rtp, s, spec).sum();
}

void write_cumulative_profit_csv(const std::string& path, const std::vector<Timestamp>& ts, const Vector& step) {
  if (static_cast<Eigen::Index>(ts.size()) != step.size())
    throw DimensionMismatch("timestamps and profits differ in length");
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out.precision(12);
  out << "timestamp,step_profit,cumulative\n";
  double acc = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    acc += step[static_cast<Eigen::Index>(i)];
    out << format_timestamp(ts[i]) << ',' << step[static_cast<Eigen::Index>(i)] << ',' << acc << '\n';
  }
}

EnergyTotals dispatch_energy_totals(const Vector& y, double step_hours) {
  return {(-y).cwiseMax(0.0).sum() * step_hours, y.cwiseMax(0.0).sum() * step_hours};
}

std::string to_string(MatchMode mode) { return mode == MatchMode::Event ? "event" : "magnitude"; }

MatchMode parse_match_mode(const std::string& text) {
  if (text == "event") return MatchMode::Event;
  if (text == "magnitude") return MatchMode::Magnitude;
  throw ConfigError("mode must be 'event' or 'magnitude', got '" + text + "'");
}

}  // namespace dfl
