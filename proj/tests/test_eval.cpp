#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "dfl/eval.hpp"
#include "test_support.hpp"

using namespace dfl;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

ConfusionCounts counts(long tp, long tn, long fp, long fn) {
  ConfusionCounts c;
  c.tp = tp;
  c.tn = tn;
  c.fp = fp;
  c.fn = fn;
  return c;
}

// Straightforward restatement of the matching rule: for each actual event in
// order, scan offsets 0, -1, +1, -2, +2, ... for a free same-sign prediction.
ConfusionCounts reference_confusion(const LabelSeq& pred, const LabelSeq& actual, int tol) {
  const int n = static_cast<int>(actual.size());
  std::vector<bool> used(n, false), hit(n, false);
  for (int t = 0; t < n; ++t) {
    if (actual[t] == 0) continue;
    for (int d = 0; d <= tol && !hit[t]; ++d) {
      for (int s : {t - d, t + d}) {
        if (s < 0 || s >= n || used[s] || pred[s] != actual[t]) continue;
        used[s] = hit[t] = true;
        break;
      }
    }
  }
  ConfusionCounts c;
  for (int t = 0; t < n; ++t) {
    if (actual[t] != 0) {
      if (hit[t]) ++c.tp;
      else if (pred[t] == -actual[t]) ++c.fp;
      else ++c.fn;
    } else {
      if (pred[t] == 0 || used[t]) ++c.tn;
      else ++c.fp;
    }
  }
  return c;
}

LabelSeq random_labels(std::mt19937_64& rng, int n, double p_event) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LabelSeq out(static_cast<std::size_t>(n));
  for (int& x : out) {
    const double r = u(rng);
    x = r < p_event / 2 ? -1 : (r < p_event ? 1 : 0);
  }
  return out;
}

}  // namespace

TEST_CASE("event classification uses strict thresholds") {
  CHECK(classify_events(vec({0.3, -0.3, 0.0}), 0.05) == LabelSeq{1, -1, 0});
  CHECK(classify_events(vec({0.04}), 0.05) == LabelSeq{0});
  CHECK(classify_events(vec({-0.05}), 0.05) == LabelSeq{0});
  CHECK(classify_events(vec({0.05}), 0.05) == LabelSeq{0});
}

TEST_CASE("event confusion hand traces") {
  const LabelSeq a{1, -1, 0, 0, 1, 0};
  CHECK(event_confusion(a, a, 2) == counts(3, 3, 0, 0));
  CHECK(event_confusion({0, 0, 1}, {1, 0, 0}, 2) == counts(1, 2, 0, 0));
  CHECK(event_confusion({0, 0, 0, 1}, {1, 0, 0, 0}, 2) == counts(0, 2, 1, 1));
  // Opposite sign at the same step is a false positive, not a miss.
  CHECK(event_confusion({-1}, {1}, 2) == counts(0, 0, 1, 0));
  // Two actual events compete for one prediction: the earlier one wins.
  CHECK(event_confusion({0, 1, 0}, {1, 0, 1}, 1) == counts(1, 1, 0, 1));
  // Nearest first: the prediction at distance 1 is taken over distance 2.
  CHECK(event_confusion({1, 0, 0, 1, 0}, {0, 0, 1, 0, 0}, 2) == counts(1, 3, 1, 0));
  // Equal distance: the earlier prediction is taken.
  CHECK(event_confusion({0, 1, 0, 1, 0}, {0, 0, 1, 0, 0}, 1) == counts(1, 3, 1, 0));
  CHECK(event_confusion({0, 1, 0, 1, 0}, {0, 0, 1, 0, 0}, 1) ==
        reference_confusion({0, 1, 0, 1, 0}, {0, 0, 1, 0, 0}, 1));
  CHECK_THROWS_AS(event_confusion({1, 0}, {1}, 2), LengthMismatch);
}

TEST_CASE("event confusion agrees with the reference matcher") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    const int n = 1 + static_cast<int>(rng() % 40);
    const int tol = static_cast<int>(rng() % 4);
    const LabelSeq p = random_labels(rng, n, 0.5), a = random_labels(rng, n, 0.5);
    const ConfusionCounts c = event_confusion(p, a, tol);
    CAPTURE(i);
    CHECK(c == reference_confusion(p, a, tol));
    CHECK(c.total() == n);
  }
}

TEST_CASE("zero tolerance is per-step three-class scoring") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 500; ++i) {
    const int n = 1 + static_cast<int>(rng() % 30);
    const LabelSeq p = random_labels(rng, n, 0.6), a = random_labels(rng, n, 0.6);
    ConfusionCounts want;
    for (int t = 0; t < n; ++t) {
      if (a[t] == 0) (p[t] == 0 ? want.tn : want.fp)++;
      else if (p[t] == a[t]) ++want.tp;
      else if (p[t] == -a[t]) ++want.fp;
      else ++want.fn;
    }
    CHECK(event_confusion(p, a, 0) == want);
  }
}

TEST_CASE("magnitude confusion") {
  const Vector y = vec({0.5, -0.3, 0.0, 0.2});
  CHECK(magnitude_confusion(y, y, 0.2, 2, 0.05) ==
        event_confusion(classify_events(y, 0.05), classify_events(y, 0.05), 2));
  // |0.39 - 0.5| = 0.11 exceeds 0.2 * 0.5.
  CHECK(magnitude_confusion(vec({0.39}), vec({0.5}), 0.2, 2, 0.05) == counts(0, 0, 0, 1));
  CHECK(magnitude_confusion(vec({0.0, 0.39}), vec({0.5, 0.0}), 0.2, 2, 0.05) == counts(0, 0, 1, 1));
  CHECK(magnitude_confusion(vec({0.41}), vec({0.5}), 0.2, 2, 0.05) == counts(1, 0, 0, 0));
  CHECK(magnitude_confusion(vec({0.0, 0.41}), vec({0.5, 0.0}), 0.2, 2, 0.05) == counts(1, 1, 0, 0));
  CHECK_THROWS_AS(magnitude_confusion(vec({0.1}), vec({0.1, 0.2}), 0.2, 2, 0.05), LengthMismatch);
}

TEST_CASE("magnitude true positives are a subset of event true positives") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01(0.0, 0.3);
  for (int i = 0; i < 500; ++i) {
    const int n = 1 + static_cast<int>(rng() % 30);
    Vector a(n), p(n);
    for (int t = 0; t < n; ++t) {
      a[t] = n01(rng);
      p[t] = a[t] + 0.1 * n01(rng);
    }
    const ConfusionCounts ev = event_confusion(classify_events(p, 0.05), classify_events(a, 0.05), 2);
    const ConfusionCounts mg = magnitude_confusion(p, a, 0.2, 2, 0.05);
    CHECK(mg.tp <= ev.tp);
    CHECK(mg.total() == n);
  }
}

TEST_CASE("metric formulas") {
  const MetricsReport r = prf_metrics(counts(1463, 5878, 672, 723));
  CHECK(std::abs(100 * r.precision - 68.52) < 0.01);
  CHECK(std::abs(100 * r.accuracy - 84.03) < 0.01);
  CHECK(std::abs(100 * r.recall - 66.93) < 0.01);
  CHECK(std::abs(100 * r.f1 - 67.72) < 0.01);
  CHECK_FALSE(r.degenerate);

  const MetricsReport v = prf_metrics(counts(792, 4252, 352, 364));
  CHECK(std::abs(100 * v.precision - 69.23) < 0.01);
  CHECK(std::abs(100 * v.accuracy - 87.57) < 0.01);
  CHECK(std::abs(100 * v.recall - 68.51) < 0.01);
  CHECK(std::abs(100 * v.f1 - 68.87) < 0.01);

  const MetricsReport perfect = prf_metrics(counts(4, 7, 0, 0));
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  const MetricsReport none = prf_metrics(counts(0, 5, 0, 0));
  CHECK(none.degenerate);
  CHECK(none.precision == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK(none.accuracy == 1.0);
}

TEST_CASE("arbitrage profit") {
  const StorageSpec s = dfl::testing::unit_spec(2);
  CHECK(arbitrage_profit(vec({1, 5}), schedule_from_net(vec({0, 0}), s), s) == 0.0);
  CHECK(arbitrage_profit(vec({1, 5}), schedule_from_net(vec({-1, 1}), s), s) == 4.0);
  CHECK(arbitrage_profit(vec({1, 5}), schedule_from_net(vec({1, -1}), s), s) == -4.0);
  StorageSpec c = s;
  c.cost_c1 = 2.0;
  const DispatchSchedule d = schedule_from_net(vec({-1, 1}), c);
  const Vector steps = step_profits(vec({1, 5}), d, c);
  CHECK(steps[0] == -1.0);
  CHECK(steps[1] == 3.0);
  CHECK(steps.sum() == arbitrage_profit(vec({1, 5}), d, c));
  CHECK_THROWS_AS(arbitrage_profit(vec({1, 5, 2}), d, c), DimensionMismatch);
}

TEST_CASE("cumulative profit csv") {
  const auto path = std::filesystem::temp_directory_path() / "dfl_test_profit.csv";
  write_cumulative_profit_csv(path.string(), {0, 3600, 7200}, vec({1.5, -0.5, 2.0}));
  std::ifstream in(path);
  std::string header, l1, l2, l3;
  std::getline(in, header);
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, l3);
  in.close();
  std::filesystem::remove(path);
  CHECK(header == "timestamp,step_profit,cumulative");
  CHECK(l1 == "1970-01-01 00:00,1.5,1.5");
  CHECK(l3 == "1970-01-01 02:00,2,3");
}

TEST_CASE("dispatch energy totals") {
  EnergyTotals e = dispatch_energy_totals(vec({1, -1}));
  CHECK(e.charge == 1.0);
  CHECK(e.discharge == 1.0);
  e = dispatch_energy_totals(Vector::Zero(4));
  CHECK(e.charge == 0.0);
  CHECK(e.discharge == 0.0);
  e = dispatch_energy_totals(vec({0.5, 0.5, -0.25}));
  CHECK(e.charge == 0.25);
  CHECK(e.discharge == 1.0);
  e = dispatch_energy_totals(vec({0.5, -0.25}), 0.5);
  CHECK(e.charge == 0.125);
  CHECK(e.discharge == 0.25);
}

TEST_CASE("match mode names") {
  CHECK(parse_match_mode("event") == MatchMode::Event);
  CHECK(parse_match_mode("magnitude") == MatchMode::Magnitude);
  CHECK(to_string(MatchMode::Magnitude) == "magnitude");
  CHECK_THROWS_AS(parse_match_mode("fuzzy"), ConfigError);
}
