// dfl: data generation, dispatch, training, prediction and evaluation.
// Exit codes: 0 ok, 1 runtime failure, 2 configuration or validation error.

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dfl/csv.hpp"
#include "dfl/data.hpp"
#include "dfl/eval.hpp"
#include "dfl/json_io.hpp"
#include "dfl/storage_opt.hpp"
#include "dfl/training.hpp"

namespace {

using namespace dfl;

// Storage used when no --spec is given.
StorageSpec default_spec() {
  StorageSpec s;
  s.power_rating = 0.5;
  s.capacity = 2.0;
  s.efficiency = 0.9;
  s.initial_soc = 0.5;
  s.horizon = 24;
  s.cost_c1 = 10.0;
  return s;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

StorageSpec read_spec(const std::string& path) {
  if (path.empty()) return default_spec();
  // Fields missing from the file keep the defaults above.
  StorageSpec s = default_spec();
  from_json(read_json_file(path), s);
  try {
    s.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("spec: ") + e.what());
  }
  return s;
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

struct NetRecord {
  std::vector<Timestamp> timestamps;
  Vector y, p, b;
};

// CSV with timestamp and y columns; p and b are used when present.
NetRecord read_net_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  const CsvTable t = read_csv(in);
  const int ct = t.column("timestamp"), cy = t.column("y"), cp = t.column("p"), cb = t.column("b");
  if (ct < 0 || cy < 0) throw ParseError(path + ": header must contain timestamp and y");
  NetRecord r;
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  r.y.resize(n);
  r.p.resize(n);
  r.b.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = t.rows[static_cast<std::size_t>(i)];
    const int line = t.row_lines[static_cast<std::size_t>(i)];
    r.timestamps.push_back(parse_timestamp(row[ct]));
    r.y[i] = parse_number(row[cy], line, cy + 1);
    r.p[i] = cp >= 0 ? parse_number(row[cp], line, cp + 1) : std::max(r.y[i], 0.0);
    r.b[i] = cb >= 0 ? parse_number(row[cb], line, cb + 1) : std::max(-r.y[i], 0.0);
  }
  return r;
}

void progress(const std::string& msg) { std::cerr << "[dfl] " << msg << '\n'; }

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  int days = 7;
  std::uint64_t seed = 0;
  std::string out;
  std::string behavior_out;
  std::string spec;
  SyntheticGenConfig synth;
};

int cmd_gen_data(const GenArgs& a) {
  if (a.days < 1) throw ConfigError("--days must be >= 1");
  const PriceSeries series = synth_price_series(a.days, a.seed);
  write_price_csv(a.out, series);
  progress("wrote " + std::to_string(series.size()) + " price rows to " + a.out);
  if (a.behavior_out.empty()) return 0;

  const StorageSpec spec = read_spec(a.spec);
  SyntheticGenConfig synth = a.synth;
  synth.seed = a.seed;
  try {
    synth.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const Vector reward = synth_reward(series, synth);
  const Vector y = block_dispatch(reward, spec);
  std::ofstream out(a.behavior_out);
  if (!out) throw Error("cannot write " + a.behavior_out);
  out.precision(17);
  out << "timestamp,reward,p,b,y\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out << format_timestamp(series.timestamps[i]) << ',' << reward[k] << ',' << std::max(0.0, y[k]) << ','
        << std::max(0.0, -y[k]) << ',' << y[k] << '\n';
  }
  progress("wrote behavior targets to " + a.behavior_out);
  return 0;
}

// ------------------------------------------------------------------- solve

struct SolveArgs {
  std::string prices;
  std::string spec;
  std::string out;
  std::string column = "rtp";
  int start = 0;
  bool prefer_idle = false;
};

int cmd_solve(const SolveArgs& a) {
  const StorageSpec spec = read_spec(a.spec);
  const PriceSeries series = load_price_csv(a.prices);
  if (a.column != "rtp" && a.column != "dap") throw ConfigError("--column must be rtp or dap");
  const Vector& price = a.column == "rtp" ? series.rtp : series.dap;
  if (a.start < 0 || a.start + spec.horizon > price.size()) {
    std::ostringstream os;
    os << "window [" << a.start << ", " << a.start + spec.horizon << ") exceeds the " << price.size()
       << " price rows";
    throw ConfigError(os.str());
  }
  SolveOptions opt;
  opt.prefer_idle = a.prefer_idle;
  const Vector reward = price.segment(a.start, spec.horizon);
  const DispatchSchedule s = solve_dispatch(reward, spec, opt);
  Json j = s;
  j["start"] = format_timestamp(series.timestamps[static_cast<std::size_t>(a.start)]);
  j["config_hash"] = json_hash(Json{{"spec", spec}, {"column", a.column}, {"start", a.start},
                                    {"prefer_idle", a.prefer_idle}, {"reward", reward}});
  write_json_file(a.out, j);
  progress("objective " + std::to_string(s.objective) + ", wrote " + a.out);
  return 0;
}

// ------------------------------------------------------------------- train

struct RunConfig {
  TrainConfig train;
  std::string prices;
  std::string behavior;
  int lookback = 24;
  int step = 24;
  PriorChannel prior = PriorChannel::Rtp;
  bool use_load = true;
  bool allow_gaps = false;
  int holdout_days = 0;
  std::string checkpoint;
  std::string loss_log;
  std::string dataset_out;
};

RunConfig parse_run_config(const Json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig rc;
  rc.train.spec = default_spec();
  for (const auto& item : j.items())
    if (item.key() != "train" && item.key() != "data" && item.key() != "output")
      throw ConfigError("config: unknown key '" + item.key() + "'");
  if (j.contains("train")) from_json(j.at("train"), rc.train);

  auto field = [](const Json& obj, const std::string& ctx, const char* key, auto& out) {
    if (!obj.contains(key)) return;
    try {
      out = obj.at(key).get<std::decay_t<decltype(out)>>();
    } catch (const Json::exception& e) {
      throw ConfigError(ctx + "." + key + ": " + e.what());
    }
  };
  auto strict = [](const Json& obj, const std::string& ctx, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw ConfigError(ctx + ": expected a JSON object");
    for (const auto& item : obj.items()) {
      bool ok = false;
      for (const char* k : keys) ok = ok || item.key() == k;
      if (!ok) throw ConfigError(ctx + ": unknown key '" + item.key() + "'");
    }
  };

  if (!j.contains("data")) throw ConfigError("config.data: missing");
  const Json& d = j.at("data");
  strict(d, "data", {"prices", "behavior", "lookback", "step", "prior", "use_load", "allow_gaps", "holdout_days"});
  field(d, "data", "prices", rc.prices);
  field(d, "data", "behavior", rc.behavior);
  field(d, "data", "lookback", rc.lookback);
  field(d, "data", "step", rc.step);
  std::string prior = "rtp";
  field(d, "data", "prior", prior);
  if (prior != "rtp" && prior != "dap") throw ConfigError("data.prior: must be rtp or dap");
  rc.prior = prior == "rtp" ? PriorChannel::Rtp : PriorChannel::Dap;
  field(d, "data", "use_load", rc.use_load);
  field(d, "data", "allow_gaps", rc.allow_gaps);
  field(d, "data", "holdout_days", rc.holdout_days);
  if (rc.prices.empty()) throw ConfigError("data.prices: required");
  if (rc.train.task == Task::Behavior && rc.behavior.empty())
    throw ConfigError("data.behavior: required for the behavior task");
  if (rc.lookback < 1) throw ConfigError("data.lookback: must be >= 1");
  if (rc.step < 1) throw ConfigError("data.step: must be >= 1");
  if (rc.holdout_days < 0) throw ConfigError("data.holdout_days: must be >= 0");

  if (!j.contains("output")) throw ConfigError("config.output: missing");
  const Json& o = j.at("output");
  strict(o, "output", {"checkpoint", "loss_log", "dataset"});
  field(o, "output", "checkpoint", rc.checkpoint);
  field(o, "output", "loss_log", rc.loss_log);
  field(o, "output", "dataset", rc.dataset_out);
  if (rc.checkpoint.empty()) throw ConfigError("output.checkpoint: required");
  rc.train.validate();
  return rc;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed) {
  RunConfig rc = parse_run_config(read_json_file(config_path));
  if (seed) rc.train.seed = *seed;

  CsvSchema schema;
  schema.allow_gaps = rc.allow_gaps;
  const PriceSeries series = load_price_csv(rc.prices, schema);
  RollingOptions ro;
  ro.lookback = rc.lookback;
  ro.horizon = rc.train.spec.horizon;
  ro.step = rc.step;
  ro.prior = rc.prior;
  ro.use_load = rc.use_load;

  Dataset ds;
  if (rc.train.task == Task::Arbitrage) {
    ds = build_arbitrage_dataset(series, rc.train.spec, ro);
  } else {
    const NetRecord beh = read_net_csv(rc.behavior);
    std::map<Timestamp, double> by_time;
    for (std::size_t i = 0; i < beh.timestamps.size(); ++i)
      by_time[beh.timestamps[i]] = beh.y[static_cast<Eigen::Index>(i)];
    Vector targets(static_cast<Eigen::Index>(series.size()));
    for (std::size_t i = 0; i < series.size(); ++i) {
      auto it = by_time.find(series.timestamps[i]);
      targets[static_cast<Eigen::Index>(i)] = it == by_time.end() ? std::nan("") : it->second;
    }
    ds = build_rolling_dataset(series, targets, ro);
  }

  // Hold out every window whose targets reach into the last holdout_days.
  const Timestamp cutoff = series.timestamps.back() + series.step_seconds -
                           static_cast<Timestamp>(rc.holdout_days) * 86400;
  std::vector<Sample> kept;
  for (Sample& s : ds.samples) {
    const Timestamp end = s.start + static_cast<Timestamp>(ds.horizon) * series.step_seconds;
    if (end <= cutoff) kept.push_back(std::move(s));
  }
  ds.samples = std::move(kept);
  progress(std::to_string(ds.samples.size()) + " training windows");
  if (!rc.dataset_out.empty()) {
    std::ofstream out(rc.dataset_out);
    if (!out) throw Error("cannot write " + rc.dataset_out);
    write_dataset_jsonl(out, ds);
  }

  const TrainResult r = train(ds, rc.train);
  for (const EpochLog& e : r.epochs)
    if (e.epoch == 1 || e.epoch == static_cast<int>(r.epochs.size()) || e.epoch % 10 == 0)
      progress("epoch " + std::to_string(e.epoch) + " mean loss " + std::to_string(e.mean_total));
  save_checkpoint(rc.checkpoint, r.checkpoint);
  if (!rc.loss_log.empty()) write_loss_log_csv(rc.loss_log, r.batches);
  progress("wrote " + rc.checkpoint + " (config " + r.checkpoint.config_hash + ")");
  return 0;
}

// ----------------------------------------------------------------- predict

struct PredictArgs {
  std::string checkpoint;
  std::string features;
  std::string out;
  std::string from;
};

int cmd_predict(const PredictArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const PriceSeries series = load_price_csv(a.features);
  RollingOptions ro;
  ro.lookback = ck.lookback;
  ro.horizon = ck.horizon;
  ro.step = 1;
  ro.use_load = ck.channels.size() > 2;
  if (ro.use_load && !series.has_load()) throw SchemaMismatch("checkpoint expects a load channel");
  const Dataset ds = build_rolling_dataset(series, Vector::Zero(static_cast<Eigen::Index>(series.size())), ro);
  const Timestamp from = a.from.empty() ? series.timestamps.front() : parse_timestamp(a.from);

  std::ofstream out(a.out);
  if (!out) throw Error("cannot write " + a.out);
  out.precision(17);
  out << "timestamp,y,p,b,soc,reward,window_feasible\n";
  // Consecutive non-overlapping windows starting at `from`.
  Timestamp next = from;
  int windows = 0, infeasible = 0;
  for (const Sample& s : ds.samples) {
    if (s.start < next) continue;
    const Prediction p = predict(ck, s.features);
    for (int t = 0; t < ck.horizon; ++t) {
      out << format_timestamp(s.start + static_cast<Timestamp>(t) * series.step_seconds) << ','
          << p.schedule.net[t] << ',' << p.schedule.discharge[t] << ',' << p.schedule.charge[t] << ','
          << p.schedule.soc[t] << ',';
      if (p.reward.size() > 0) out << p.reward[t];
      out << ',' << (p.feasible ? 1 : 0) << '\n';
    }
    next = s.start + static_cast<Timestamp>(ck.horizon) * series.step_seconds;
    ++windows;
    infeasible += p.feasible ? 0 : 1;
  }
  if (windows == 0) throw InsufficientData("no complete window at or after the requested start");
  progress("predicted " + std::to_string(windows) + " windows (" + std::to_string(infeasible) +
           " flagged infeasible), wrote " + a.out);
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvalArgs {
  std::string pred;
  std::string actual;
  std::string mode = "event";
  std::string out;
  double threshold = 0.05;
  int tolerance = 2;
  double pct = 0.2;
  std::string prices;
  std::string spec;
  std::string profit_out;
};

int cmd_evaluate(const EvalArgs& a) {
  const MatchMode mode = parse_match_mode(a.mode);
  if (!(a.threshold > 0.0)) throw ConfigError("--threshold must be > 0");
  if (a.tolerance < 0) throw ConfigError("--tolerance must be >= 0");
  if (!(a.pct > 0.0 && a.pct <= 1.0)) throw ConfigError("--pct must lie in (0, 1]");
  const NetRecord pred = read_net_csv(a.pred);
  const NetRecord actual = read_net_csv(a.actual);
  std::map<Timestamp, double> act;
  for (std::size_t i = 0; i < actual.timestamps.size(); ++i)
    act[actual.timestamps[i]] = actual.y[static_cast<Eigen::Index>(i)];
  Vector y_act(pred.y.size());
  for (std::size_t i = 0; i < pred.timestamps.size(); ++i) {
    auto it = act.find(pred.timestamps[i]);
    if (it == act.end()) throw SchemaMismatch("no actual value at " + format_timestamp(pred.timestamps[i]));
    y_act[static_cast<Eigen::Index>(i)] = it->second;
  }

  const ConfusionCounts counts =
      mode == MatchMode::Event
          ? event_confusion(classify_events(pred.y, a.threshold), classify_events(y_act, a.threshold), a.tolerance)
          : magnitude_confusion(pred.y, y_act, a.pct, a.tolerance, a.threshold);
  MetricsReport rep = prf_metrics(counts);
  rep.mode = mode;
  rep.threshold = a.threshold;
  rep.tolerance_steps = a.tolerance;

  Json j = rep;
  if (mode == MatchMode::Magnitude) j["pct"] = a.pct;
  const EnergyTotals ep = dispatch_energy_totals(pred.y), ea = dispatch_energy_totals(y_act);
  j["energy"] = {{"predicted", {{"charge", ep.charge}, {"discharge", ep.discharge}}},
                 {"actual", {{"charge", ea.charge}, {"discharge", ea.discharge}}}};

  if (!a.prices.empty()) {
    const StorageSpec spec = read_spec(a.spec);
    const PriceSeries series = load_price_csv(a.prices);
    std::map<Timestamp, double> rtp;
    for (std::size_t i = 0; i < series.size(); ++i) rtp[series.timestamps[i]] = series.rtp[static_cast<Eigen::Index>(i)];
    Vector price(pred.y.size());
    for (std::size_t i = 0; i < pred.timestamps.size(); ++i) {
      auto it = rtp.find(pred.timestamps[i]);
      if (it == rtp.end()) throw SchemaMismatch("no price at " + format_timestamp(pred.timestamps[i]));
      price[static_cast<Eigen::Index>(i)] = it->second;
    }
    DispatchSchedule s;
    s.discharge = pred.p;
    s.charge = pred.b;
    StorageSpec unit = spec;
    unit.horizon = static_cast<int>(pred.y.size());
    const Vector step = step_profits(price, s, unit);
    j["profit"] = step.sum();
    if (!a.profit_out.empty()) write_cumulative_profit_csv(a.profit_out, pred.timestamps, step);
  }
  j["config_hash"] = json_hash(Json{{"pred", a.pred}, {"actual", a.actual}, {"mode", a.mode},
                                    {"threshold", a.threshold}, {"tolerance", a.tolerance}, {"pct", a.pct}});
  write_json_file(a.out, j);
  progress("F1 " + std::to_string(rep.f1) + ", wrote " + a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decision-focused storage arbitrage toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate synthetic prices and optional behavior targets");
  g->add_option("--days", gen.days, "Number of days")->required();
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--out", gen.out, "Price CSV path")->required();
  g->add_option("--behavior-out", gen.behavior_out, "Behavior CSV path");
  g->add_option("--spec", gen.spec, "Storage spec JSON for the behaviors");
  g->add_option("--alpha-low", gen.synth.alpha_low, "Lower blend weight");
  g->add_option("--alpha-high", gen.synth.alpha_high, "Upper blend weight");
  g->add_option("--noise-std", gen.synth.noise_std, "Reward noise, $/MWh");

  SolveArgs solve;
  auto* s = app.add_subcommand("solve", "Solve the dispatch problem on one price window");
  s->add_option("--prices", solve.prices, "Price CSV")->required();
  s->add_option("--spec", solve.spec, "Storage spec JSON");
  s->add_option("--out", solve.out, "Schedule JSON path")->required();
  s->add_option("--column", solve.column, "Price column: rtp or dap");
  s->add_option("--start", solve.start, "First row of the window");
  s->add_flag("--prefer-idle", solve.prefer_idle, "Break ties toward idle");

  std::string config;
  std::optional<std::uint64_t> train_seed;
  auto* t = app.add_subcommand("train", "Train a predictor from a JSON config");
  t->add_option("--config", config, "Run config JSON")->required();
  t->add_option("--seed", train_seed, "Override train.seed");

  PredictArgs pa;
  auto* p = app.add_subcommand("predict", "Predict dispatch from a checkpoint");
  p->add_option("--checkpoint", pa.checkpoint, "Checkpoint JSON")->required();
  p->add_option("--features", pa.features, "Price CSV with the feature history")->required();
  p->add_option("--out", pa.out, "Prediction CSV path")->required();
  p->add_option("--from", pa.from, "First target timestamp");

  EvalArgs ea;
  auto* e = app.add_subcommand("evaluate", "Score predictions against actual dispatch");
  e->add_option("--pred", ea.pred, "Prediction CSV (timestamp, y[, p, b])")->required();
  e->add_option("--actual", ea.actual, "Actual CSV (timestamp, y)")->required();
  e->add_option("--mode", ea.mode, "event or magnitude");
  e->add_option("--out", ea.out, "Metrics JSON path")->required();
  e->add_option("--threshold", ea.threshold, "Event threshold, MW");
  e->add_option("--tolerance", ea.tolerance, "Time tolerance, steps");
  e->add_option("--pct", ea.pct, "Magnitude tolerance fraction");
  e->add_option("--prices", ea.prices, "Price CSV for profit");
  e->add_option("--spec", ea.spec, "Storage spec JSON for profit costs");
  e->add_option("--profit-out", ea.profit_out, "Cumulative profit CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*g) return cmd_gen_data(gen);
    if (*s) return cmd_solve(solve);
    if (*t) return cmd_train(config, train_seed);
    if (*p) return cmd_predict(pa);
    if (*e) return cmd_evaluate(ea);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 1;
}
