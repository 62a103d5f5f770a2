#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dfl/predictor.hpp"
#include "dfl/storage_opt.hpp"

namespace dfl {

/// Seconds since 1970-01-01 00:00 UTC.
using Timestamp = std::int64_t;

/// Accepts "YYYY-MM-DD HH:MM[:SS]" and the ISO 'T' separator. No time zones.
Timestamp parse_timestamp(const std::string& text);
std::string format_timestamp(Timestamp t);

struct PriceSeries {
  std::vector<Timestamp> timestamps;
  Vector rtp;   // $/MWh
  Vector dap;   // $/MWh
  Vector load;  // MW, empty when the channel is absent
  std::int64_t step_seconds = 3600;

  std::size_t size() const { return timestamps.size(); }
  bool has_load() const { return load.size() > 0; }
  double step_hours() const { return static_cast<double>(step_seconds) / 3600.0; }
  int steps_per_day() const { return static_cast<int>(86400 / step_seconds); }
};

struct CsvSchema {
  std::string timestamp = "timestamp";
  std::string rtp = "rtp";
  std::string dap = "dap";
  std::string load = "load";  // optional column
  /// Fill missing steps with NaN instead of raising GapError. Windows that
  /// touch a gap are later dropped by the dataset builders.
  bool allow_gaps = false;
};

/// Throws ParseError (line/column), GapError (listing missing timestamps)
/// or NonUniformStep.
PriceSeries load_price_csv(const std::string& path, const CsvSchema& schema = {});
PriceSeries parse_price_csv(std::istream& in, const CsvSchema& schema = {});
void write_price_csv(const std::string& path, const PriceSeries& series);

enum class PriorChannel { Rtp, Dap };

struct Sample {
  Matrix features;     // L x F, channels rtp, dap[, load]
  Vector target_y;     // T
  Vector prior_xi;     // T, previous-day price at the target hours
  Vector realized_rtp; // T
  Timestamp start = 0; // first target step
  int index = 0;       // first target position in the series

};

bool operator==(const Sample& a, const Sample& b);

struct Dataset {
  int lookback = 24;
  int horizon = 24;
  std::vector<std::string> channels;
  std::vector<Sample> samples;

};

bool operator==(const Dataset& a, const Dataset& b);

struct RollingOptions {
  int lookback = 24;
  int horizon = 24;
  int step = 1;
  PriorChannel prior = PriorChannel::Rtp;
  bool use_load = true;  // when the series carries it
};

/// Sample i uses features [i, i+L) and targets [i+L, i+L+T), for i a
/// multiple of `step`. Windows whose features, targets or prior touch NaN
/// or precede the series start are dropped. `targets` has the series length.
/// Throws InsufficientData when length < L + T.
Dataset build_rolling_dataset(const PriceSeries& series, const Vector& targets, const RollingOptions& options);

/// Number of windows before any are dropped: (n - L - T) / step + 1.
int rolling_window_count(int length, int lookback, int horizon, int step);

/// Net dispatch over the whole series from consecutive horizon-length blocks,
/// each solved from the spec's initial SoC with the idle preference. A short
/// final block is solved with a reduced horizon.
Vector block_dispatch(const Vector& reward, const StorageSpec& spec);

/// block_dispatch on the realized RTP.
Vector build_arbitrage_targets(const PriceSeries& series, const StorageSpec& spec);

/// Rolling dataset whose target for every window is the optimal dispatch on
/// that window's realized RTP.
Dataset build_arbitrage_dataset(const PriceSeries& series, const StorageSpec& spec, const RollingOptions& options);

struct SyntheticGenConfig {
  double alpha_low = 0.5;
  double alpha_high = 1.0;
  double noise_std = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// alpha * DAP + (1 - alpha) * RTP + noise, alpha and noise drawn per step.
/// Throws MissingChannel when either price channel is absent.
Vector synth_reward(const PriceSeries& series, const SyntheticGenConfig& cfg);

/// Hourly prices: daily sinusoid between 20 and 60 $/MWh, an evening spike
/// of up to 200 $/MWh on about one day in ten, Gaussian noise (sigma 3),
/// floor at -50. DAP is a centered 5-hour moving average of RTP. Load is a
/// daily profile around 1 MW with noise.
PriceSeries synth_price_series(int days, std::uint64_t seed, Timestamp start = 1609459200);

/// One sample per line, preceded by a header line with L, T and channels.
void write_dataset_jsonl(std::ostream& out, const Dataset& dataset);
Dataset read_dataset_jsonl(std::istream& in);

}  // namespace dfl
