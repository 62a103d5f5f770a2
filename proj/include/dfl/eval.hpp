#pragma once

#include <string>
#include <vector>

#include "dfl/data.hpp"
#include "dfl/storage_opt.hpp"

namespace dfl {

/// -1 charge, 0 standby, 1 discharge.
using LabelSeq = std::vector<int>;

struct ConfusionCounts {
  long tp = 0;
  long tn = 0;
  long fp = 0;
  long fn = 0;

  long total() const { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

enum class MatchMode { Event, Magnitude };

struct MetricsReport {
  double precision = 0.0;
  double accuracy = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // some denominator was zero and its metric reported as 0
  ConfusionCounts counts;
  MatchMode mode = MatchMode::Event;
  double threshold = 0.0;
  int tolerance_steps = 0;
};

/// 1 if y > threshold, -1 if y < -threshold, else 0 (boundary is standby).
LabelSeq classify_events(const Vector& y, double threshold);

/// Greedy one-to-one matching: actual events are visited left to right and
/// each takes the nearest unmatched same-sign prediction within the
/// tolerance, ties going to the earlier step. Per step:
///   actual != 0, matched                    -> TP
///   actual != 0, opposite-sign prediction   -> FP
///   actual != 0, otherwise                  -> FN
///   actual == 0, no prediction or matched   -> TN
///   actual == 0, unmatched prediction       -> FP
ConfusionCounts event_confusion(const LabelSeq& pred, const LabelSeq& actual, int tolerance_steps = 2);

/// Event matching, then pairs with |pred - actual| > pct |actual| are
/// unmatched and scored as above. Magnitude TPs are a subset of event TPs.
ConfusionCounts magnitude_confusion(const Vector& pred_y, const Vector& actual_y, double pct, int tolerance_steps,
                                    double threshold);

MetricsReport prf_metrics(const ConfusionCounts& counts);

/// sum_t rtp_t (p_t - b_t) step_hours - u(p, b).
double arbitrage_profit(const Vector& realized_rtp, const DispatchSchedule& schedule, const StorageSpec& spec);

/// Per-step profit; the last entry of its running sum equals arbitrage_profit.
Vector step_profits(const Vector& realized_rtp, const DispatchSchedule& schedule, const StorageSpec& spec);

/// CSV with columns timestamp, step_profit, cumulative.
void write_cumulative_profit_csv(const std::string& path, const std::vector<Timestamp>& timestamps,
                                 const Vector& step_profit);

struct EnergyTotals {
  double charge = 0.0;     // MWh
  double discharge = 0.0;  // MWh
};
EnergyTotals dispatch_energy_totals(const Vector& y, double step_hours = 1.0);

std::string to_string(MatchMode mode);
MatchMode parse_match_mode(const std::string& text);

}  // namespace dfl
