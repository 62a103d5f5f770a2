#include "dfl/data.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dfl/csv.hpp"
#include "dfl/json_io.hpp"
#include "dfl/parallel.hpp"
#include "dfl/rng.hpp"

namespace dfl {
namespace {

using std::chrono::days;
using std::chrono::sys_days;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int read_int(const std::string& s, std::size_t pos, std::size_t len) {
  if (pos + len > s.size()) throw ParseError("timestamp '" + s + "' is too short");
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') throw ParseError("timestamp '" + s + "' is malformed");
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

bool same_matrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

bool window_finite(const Vector& v, int from, int len) { return v.segment(from, len).allFinite(); }

}  // namespace

Timestamp parse_timestamp(const std::string& raw) {
  std::string s = raw;
  while (!s.empty() && (s.back() == ' ' || s.back() == 'Z')) s.pop_back();
  while (!s.empty() && s.front() == ' ') s.erase(s.begin());
  // YYYY-MM-DD[ T]HH:MM[:SS]
  if (s.size() < 16 || s[4] != '-' || s[7] != '-' || (s[10] != ' ' && s[10] != 'T') || s[13] != ':')
    throw ParseError("timestamp '" + raw + "' is not YYYY-MM-DD HH:MM[:SS]");
  const int y = read_int(s, 0, 4), mo = read_int(s, 5, 2), d = read_int(s, 8, 2);
  const int hh = read_int(s, 11, 2), mm = read_int(s, 14, 2);
  int ss = 0;
  if (s.size() > 16) {
    if (s.size() != 19 || s[16] != ':') throw ParseError("timestamp '" + raw + "' is malformed");
    ss = read_int(s, 17, 2);
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 59) throw ParseError("timestamp '" + raw + "' is not a valid time");
  const auto day_seconds = sys_days{ymd}.time_since_epoch() / std::chrono::seconds(1);
  return static_cast<Timestamp>(day_seconds) + hh * 3600 + mm * 60 + ss;
}

std::string format_timestamp(Timestamp t) {
  const Timestamp day = (t >= 0 ? t : t - 86399) / 86400;
  const Timestamp rem = t - day * 86400;
  const std::chrono::year_month_day ymd{sys_days{days{day}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                static_cast<int>(rem % 3600 / 60));
  std::string out = buf;
  if (rem % 60 != 0) {
    std::snprintf(buf, sizeof buf, ":%02d", static_cast<int>(rem % 60));
    out += buf;
  }
  return out;
}

PriceSeries parse_price_csv(std::istream& in, const CsvSchema& schema) {
  const CsvTable table = read_csv(in);
  const int c_time = table.column(schema.timestamp), c_rtp = table.column(schema.rtp),
            c_dap = table.column(schema.dap), c_load = table.column(schema.load);
  if (c_time < 0 || c_rtp < 0 || c_dap < 0)
    throw ParseError("header must contain " + schema.timestamp + "," + schema.rtp + "," + schema.dap);
  const std::size_t n = table.rows.size();
  if (n == 0) throw InsufficientData("price CSV has no data rows");

  std::vector<Timestamp> ts(n);
  std::vector<double> rtp(n), dap(n), load(c_load >= 0 ? n : 0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = table.rows[r];
    const int line = table.row_lines[r];
    try {
      ts[r] = parse_timestamp(row[c_time]);
    } catch (const ParseError& e) {
      std::ostringstream os;
      os << "line " << line << ", column " << c_time + 1 << ": " << e.what();
      throw ParseError(os.str());
    }
    auto number = [&](int col) {
      const double v = parse_number(row[col], line, col + 1);
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "line " << line << ", column " << col + 1 << ": non-finite value";
        throw ParseError(os.str());
      }
      return v;
    };
    rtp[r] = number(c_rtp);
    dap[r] = number(c_dap);
    if (c_load >= 0) load[r] = number(c_load);
  }

  // The step is the most frequent spacing; gaps are multiples of it.
  std::map<std::int64_t, int> spacing;
  for (std::size_t r = 1; r < n; ++r) {
    const std::int64_t delta = ts[r] - ts[r - 1];
    if (delta <= 0) {
      std::ostringstream os;
      os << "line " << table.row_lines[r] << ": timestamps must be strictly increasing";
      throw NonUniformStep(os.str());
    }
    ++spacing[delta];
  }
  std::int64_t step = 3600;
  int best = 0;
  for (const auto& [delta, count] : spacing)
    if (count > best) {
      best = count;
      step = delta;
    }

  std::vector<Timestamp> missing;
  for (std::size_t r = 1; r < n; ++r) {
    const std::int64_t delta = ts[r] - ts[r - 1];
    if (delta % step != 0) {
      std::ostringstream os;
      os << "line " << table.row_lines[r] << ": step of " << delta << " s is not a multiple of " << step << " s";
      throw NonUniformStep(os.str());
    }
    for (Timestamp t = ts[r - 1] + step; t < ts[r]; t += step) missing.push_back(t);
  }
  if (!missing.empty() && !schema.allow_gaps) {
    std::ostringstream os;
    os << missing.size() << " missing timestamp(s):";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) os << ' ' << format_timestamp(missing[i]);
    if (missing.size() > 20) os << " ...";
    throw GapError(os.str());
  }

  const std::size_t total = n + missing.size();
  PriceSeries s;
  s.step_seconds = step;
  s.timestamps.reserve(total);
  s.rtp.resize(static_cast<Eigen::Index>(total));
  s.dap.resize(static_cast<Eigen::Index>(total));
  if (c_load >= 0) s.load.resize(static_cast<Eigen::Index>(total));
  Eigen::Index k = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (r > 0) {
      for (Timestamp t = ts[r - 1] + step; t < ts[r]; t += step, ++k) {
        s.timestamps.push_back(t);
        s.rtp[k] = s.dap[k] = kNaN;
        if (c_load >= 0) s.load[k] = kNaN;
      }
    }
    s.timestamps.push_back(ts[r]);
    s.rtp[k] = rtp[r];
    s.dap[k] = dap[r];
    if (c_load >= 0) s.load[k] = load[r];
    ++k;
  }
  return s;
}

PriceSeries load_price_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  return parse_price_csv(in, schema);
}

void write_price_csv(const std::string& path, const PriceSeries& series) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  out.precision(17);
  out << "timestamp,rtp,dap";
  if (series.has_load()) out << ",load";
  out << '\n';
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out << format_timestamp(series.timestamps[i]) << ',' << series.rtp[k] << ',' << series.dap[k];
    if (series.has_load()) out << ',' << series.load[k];
    out << '\n';
  }
}

bool operator==(const Sample& a, const Sample& b) {
  return same_matrix(a.features, b.features) && same_matrix(a.target_y, b.target_y) &&
         same_matrix(a.prior_xi, b.prior_xi) && same_matrix(a.realized_rtp, b.realized_rtp) && a.start == b.start &&
         a.index == b.index;
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.lookback == b.lookback && a.horizon == b.horizon && a.channels == b.channels && a.samples == b.samples;
}

int rolling_window_count(int length, int lookback, int horizon, int step) {
  if (length < lookback + horizon) return 0;
  return (length - lookback - horizon) / step + 1;
}

Dataset build_rolling_dataset(const PriceSeries& series, const Vector& targets, const RollingOptions& opt) {
  if (opt.lookback < 1 || opt.horizon < 1 || opt.step < 1)
    throw InvalidArgument("lookback, horizon and step must be >= 1");
  const int n = static_cast<int>(series.size());
  if (targets.size() != n) throw DimensionMismatch("targets must cover the whole series");
  if (n < opt.lookback + opt.horizon) {
    std::ostringstream os;
    os << "series of " << n << " steps is shorter than lookback + horizon = " << opt.lookback + opt.horizon;
    throw InsufficientData(os.str());
  }
  const bool load = opt.use_load && series.has_load();
  const int day = series.steps_per_day();
  const Vector& prior = opt.prior == PriorChannel::Rtp ? series.rtp : series.dap;

  Dataset ds;
  ds.lookback = opt.lookback;
  ds.horizon = opt.horizon;
  ds.channels = {"rtp", "dap"};
  if (load) ds.channels.push_back("load");
  const int f = static_cast<int>(ds.channels.size());

  const int windows = rolling_window_count(n, opt.lookback, opt.horizon, opt.step);
  for (int w = 0; w < windows; ++w) {
    const int i = w * opt.step;
    const int first = i + opt.lookback;
    if (first - day < 0) continue;  // no previous-day prior yet
    if (!window_finite(series.rtp, i, opt.lookback) || !window_finite(series.dap, i, opt.lookback)) continue;
    if (load && !window_finite(series.load, i, opt.lookback)) continue;
    if (!window_finite(targets, first, opt.horizon) || !window_finite(series.rtp, first, opt.horizon)) continue;
    if (!window_finite(prior, first - day, opt.horizon)) continue;

    Sample s;
    s.features.resize(opt.lookback, f);
    s.features.col(0) = series.rtp.segment(i, opt.lookback);
    s.features.col(1) = series.dap.segment(i, opt.lookback);
    if (load) s.features.col(2) = series.load.segment(i, opt.lookback);
    s.target_y = targets.segment(first, opt.horizon);
    s.prior_xi = prior.segment(first - day, opt.horizon);
    s.realized_rtp = series.rtp.segment(first, opt.horizon);
    s.start = series.timestamps[static_cast<std::size_t>(first)];
    s.index = first;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Vector block_dispatch(const Vector& reward, const StorageSpec& spec) {
  const int n = static_cast<int>(reward.size());
  const int t = spec.horizon;
  const int blocks = (n + t - 1) / t;
  Vector net = Vector::Constant(n, kNaN);
  SolveOptions opt;
  opt.prefer_idle = true;
  parallel_for(static_cast<std::size_t>(blocks), [&](std::size_t k) {
    const int from = static_cast<int>(k) * t;
    const int len = std::min(t, n - from);
    const Vector r = reward.segment(from, len);
    if (!r.allFinite()) return;  // gap: leave NaN so windows touching it drop out
    StorageSpec block = spec;
    block.horizon = len;
    net.segment(from, len) = solve_dispatch(r, block, opt).net;
  });
  return net;
}

Vector build_arbitrage_targets(const PriceSeries& series, const StorageSpec& spec) {
  return block_dispatch(series.rtp, spec);
}

Dataset build_arbitrage_dataset(const PriceSeries& series, const StorageSpec& spec, const RollingOptions& options) {
  if (spec.horizon != options.horizon) throw DimensionMismatch("spec horizon must equal the dataset horizon");
  // Targets are filled per window below; the placeholder only carries NaN
  // where the realized price is missing.
  Vector placeholder = series.rtp;
  for (Eigen::Index i = 0; i < placeholder.size(); ++i)
    if (std::isfinite(placeholder[i])) placeholder[i] = 0.0;
  Dataset ds = build_rolling_dataset(series, placeholder, options);
  SolveOptions opt;
  opt.prefer_idle = true;
  parallel_for(ds.samples.size(), [&](std::size_t k) {
    Sample& s = ds.samples[k];
    s.target_y = solve_dispatch(s.realized_rtp, spec, opt).net;
  });
  return ds;
}

void SyntheticGenConfig::validate() const {
  if (!(0.0 <= alpha_low && alpha_low <= alpha_high && alpha_high <= 1.0))
    throw InvalidArgument("need 0 <= alpha_low <= alpha_high <= 1");
  if (!(noise_std >= 0.0)) throw InvalidArgument("noise_std must be >= 0");
}

Vector synth_reward(const PriceSeries& series, const SyntheticGenConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<Eigen::Index>(series.size());
  if (series.rtp.size() != n) throw MissingChannel("series has no RTP channel");
  if (series.dap.size() != n) throw MissingChannel("series has no DAP channel");
  std::mt19937_64 rng(derive_seed(cfg.seed, {0x5e7a11ULL}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = cfg.alpha_low + (cfg.alpha_high - cfg.alpha_low) * unit(rng);
    const double z = noise(rng);
    out[i] = a * series.dap[i] + (1.0 - a) * series.rtp[i] + cfg.noise_std * z;
  }
  return out;
}

PriceSeries synth_price_series(int days_count, std::uint64_t seed, Timestamp start) {
  if (days_count < 1) throw InvalidArgument("days must be >= 1");
  constexpr double kPi = 3.14159265358979323846;
  const int n = days_count * 24;
  std::mt19937_64 rng(derive_seed(seed, {0x9a1ce5ULL}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  PriceSeries s;
  s.step_seconds = 3600;
  s.timestamps.resize(static_cast<std::size_t>(n));
  s.rtp.resize(n);
  s.load.resize(n);
  for (int d = 0; d < days_count; ++d) {
    const bool spike = unit(rng) < 0.1;
    const int spike_hour = 17 + static_cast<int>(unit(rng) * 5.0);   // 17..21
    const int spike_len = 1 + static_cast<int>(unit(rng) * 3.0);     // 1..3 hours
    const double spike_height = 100.0 + 100.0 * unit(rng);           // 100..200
    for (int h = 0; h < 24; ++h) {
      const int i = d * 24 + h;
      s.timestamps[static_cast<std::size_t>(i)] = start + static_cast<Timestamp>(i) * 3600;
      const double base = 40.0 - 20.0 * std::cos(2.0 * kPi * (h - 6) / 24.0);
      double price = base + 3.0 * normal(rng);
      if (spike && h >= spike_hour && h < spike_hour + spike_len) price = std::max(price, spike_height);
      s.rtp[i] = std::clamp(price, -50.0, 200.0);
      s.load[i] = 1.0 + 0.3 * std::sin(2.0 * kPi * (h - 9) / 24.0) + 0.05 * normal(rng);
    }
  }
  s.dap.resize(n);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - 2), hi = std::min(n - 1, i + 2);
    s.dap[i] = s.rtp.segment(lo, hi - lo + 1).mean();
  }
  return s;
}

void write_dataset_jsonl(std::ostream& out, const Dataset& ds) {
  nlohmann::json header = {{"kind", "header"},
                           {"lookback", ds.lookback},
                           {"horizon", ds.horizon},
                           {"channels", ds.channels},
                           {"samples", ds.samples.size()}};
  out << header.dump() << '\n';
  for (const Sample& s : ds.samples) out << nlohmann::json(s).dump() << '\n';
}

Dataset read_dataset_jsonl(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("dataset file is empty");
  Dataset ds;
  try {
    const auto header = nlohmann::json::parse(line);
    if (header.value("kind", "") != "header") throw ParseError("first dataset line must be the header");
    ds.lookback = header.at("lookback").get<int>();
    ds.horizon = header.at("horizon").get<int>();
    ds.channels = header.at("channels").get<std::vector<std::string>>();
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      try {
        ds.samples.push_back(nlohmann::json::parse(line).get<Sample>());
      } catch (const nlohmann::json::exception& e) {
        throw ParseError("dataset line " + std::to_string(lineno) + ": " + e.what());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset header: ") + e.what());
  }
  return ds;
}

}  // namespace dfl
