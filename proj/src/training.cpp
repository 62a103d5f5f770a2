#include "dfl/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dfl/json_io.hpp"
#include "dfl/parallel.hpp"
#include "dfl/rng.hpp"

namespace dfl {
namespace {

struct SampleResult {
  double perturbed_fy = 0.0;
  double mse_reg = 0.0;
  double total = 0.0;
  MlpParams grad;
};

using SampleFn = std::function<SampleResult(const RewardModel&, const Sample&, std::uint64_t seed)>;

void require_dataset(const Dataset& ds, const TrainConfig& cfg) {
  if (ds.samples.empty()) throw InsufficientData("dataset has no samples");
  const auto f = static_cast<Eigen::Index>(ds.channels.size());
  for (const Sample& s : ds.samples) {
    if (s.features.rows() != ds.lookback || s.features.cols() != f || s.target_y.size() != ds.horizon ||
        s.prior_xi.size() != ds.horizon || s.realized_rtp.size() != ds.horizon)
      throw DimensionMismatch("sample " + std::to_string(s.index) + " does not match the dataset shape");
  }
  if (ds.horizon != cfg.spec.horizon) throw DimensionMismatch("dataset horizon differs from the spec horizon");
}

Scaling fit_scaling(const Dataset& ds, const std::vector<std::size_t>& train, Method method, double power) {
  const auto f = static_cast<Eigen::Index>(ds.channels.size());
  Scaling sc;
  sc.channel_mean = Vector::Zero(f);
  sc.channel_std = Vector::Zero(f);
  double count = 0.0;
  for (std::size_t i : train) {
    sc.channel_mean += ds.samples[i].features.colwise().sum().transpose();
    count += static_cast<double>(ds.lookback);
  }
  sc.channel_mean /= count;
  for (std::size_t i : train)
    sc.channel_std += (ds.samples[i].features.rowwise() - sc.channel_mean.transpose())
                          .array()
                          .square()
                          .colwise()
                          .sum()
                          .matrix()
                          .transpose();
  sc.channel_std = (sc.channel_std / count).cwiseSqrt();
  for (Eigen::Index k = 0; k < f; ++k)
    if (!(sc.channel_std[k] > 1e-12)) sc.channel_std[k] = 1.0;

  if (method == Method::Direct) {
    sc.output_offset = 0.0;
    sc.output_scale = power;
  } else {
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (std::size_t i : train) {
      sum += ds.samples[i].realized_rtp.sum();
      sq += ds.samples[i].realized_rtp.squaredNorm();
      n += static_cast<double>(ds.horizon);
    }
    sc.output_offset = sum / n;
    const double var = sq / n - sc.output_offset * sc.output_offset;
    sc.output_scale = var > 1e-12 ? std::sqrt(var) : 1.0;
  }
  return sc;
}

void require_finite(const SampleResult& r, const Sample& s, int epoch, int batch) {
  if (std::isfinite(r.total) && r.grad.flatten().allFinite()) return;
  std::ostringstream os;
  os << "non-finite loss or gradient at epoch " << epoch << ", batch " << batch << ", sample starting at index "
     << s.index << " (perturbed_fy=" << r.perturbed_fy << ", mse=" << r.mse_reg << ", total=" << r.total << ")";
  throw NonFiniteLoss(os.str());
}

TrainResult run_training(const Dataset& ds, const TrainConfig& cfg, const SampleFn& sample_fn) {
  cfg.validate();
  require_dataset(ds, cfg);
  const std::size_t n = ds.samples.size();
  const auto n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(n)));
  if (n_val >= n) throw InsufficientData("validation split leaves no training samples");
  std::vector<std::size_t> train(n - n_val), val(n_val);
  std::iota(train.begin(), train.end(), std::size_t{0});
  std::iota(val.begin(), val.end(), n - n_val);

  TrainResult out;
  Checkpoint& ck = out.checkpoint;
  ck.task = cfg.task;
  ck.method = cfg.method;
  ck.lookback = ds.lookback;
  ck.horizon = ds.horizon;
  ck.channels = ds.channels;
  ck.spec = cfg.spec;
  ck.seed = cfg.seed;
  ck.config_hash = config_hash(cfg);
  ck.model.scaling = fit_scaling(ds, train, cfg.method, cfg.spec.power_rating);
  const int input = ds.lookback * static_cast<int>(ds.channels.size());
  ck.model.params = init_params(derive_seed(cfg.seed, {1}), input, ds.horizon, cfg.hidden);
  ck.adam = AdamState::for_params(ck.model.params, cfg.lr);

  double best_val = std::numeric_limits<double>::infinity();
  RewardModel best_model = ck.model;
  AdamState best_adam = ck.adam;
  int stale = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = train;
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_total = 0.0;
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    int batch = 0;
    for (std::size_t from = 0; from < order.size(); from += bs, ++batch) {
      const std::size_t count = std::min(bs, order.size() - from);
      std::vector<SampleResult> results(count);
      parallel_for(count, [&](std::size_t k) {
        const std::size_t idx = order[from + k];
        results[k] = sample_fn(ck.model, ds.samples[idx],
                               perturbation_seed(cfg, epoch, batch, static_cast<int>(idx)));
      });
      MlpParams grad = ck.model.params.zeros_like();
      BatchLog log{epoch, batch, 0.0, 0.0, 0.0};
      for (std::size_t k = 0; k < count; ++k) {
        require_finite(results[k], ds.samples[order[from + k]], epoch, batch);
        grad.assign(grad.flatten() + results[k].grad.flatten());
        log.perturbed_fy += results[k].perturbed_fy;
        log.mse_reg += results[k].mse_reg;
        log.total += results[k].total;
      }
      const double inv = 1.0 / static_cast<double>(count);
      grad.assign(grad.flatten() * inv);
      epoch_total += log.total;
      log.perturbed_fy *= inv;
      log.mse_reg *= inv;
      log.total *= inv;
      out.batches.push_back(log);
      adam_step(ck.adam, ck.model.params, grad);
    }

    EpochLog elog{epoch, epoch_total / static_cast<double>(train.size()), std::numeric_limits<double>::quiet_NaN()};
    if (!val.empty()) {
      std::vector<double> losses(val.size());
      parallel_for(val.size(), [&](std::size_t k) {
        losses[k] = sample_fn(ck.model, ds.samples[val[k]],
                              perturbation_seed(cfg, 0, -1, static_cast<int>(val[k])))
                        .total;
      });
      elog.validation = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(val.size());
    }
    out.epochs.push_back(elog);

    if (cfg.patience > 0 && !val.empty()) {
      if (elog.validation < best_val) {
        best_val = elog.validation;
        best_model = ck.model;
        best_adam = ck.adam;
        stale = 0;
      } else if (++stale >= cfg.patience) {
        ck.model = best_model;
        ck.adam = best_adam;
        break;
      }
    }
  }
  return out;
}

SampleResult mse_sample(const RewardModel& model, const Matrix& x, const Vector& target) {
  const Vector err = model.predict(x) - target;
  const double t = static_cast<double>(err.size());
  SampleResult r;
  r.mse_reg = err.squaredNorm() / t;
  r.total = r.mse_reg;
  r.grad = model.gradient(x, 2.0 * err / t);
  return r;
}

}  // namespace

std::string to_string(Task task) { return task == Task::Arbitrage ? "arbitrage" : "behavior"; }

std::string to_string(Method method) {
  switch (method) {
    case Method::Proposed:
      return "proposed";
    case Method::TwoStage:
      return "two_stage";
    case Method::Direct:
      return "direct";
  }
  return "proposed";
}

Task parse_task(const std::string& text) {
  if (text == "arbitrage") return Task::Arbitrage;
  if (text == "behavior") return Task::Behavior;
  throw ConfigError("task must be 'arbitrage' or 'behavior', got '" + text + "'");
}

Method parse_method(const std::string& text) {
  if (text == "proposed") return Method::Proposed;
  if (text == "two_stage") return Method::TwoStage;
  if (text == "direct") return Method::Direct;
  throw ConfigError("method must be 'proposed', 'two_stage' or 'direct', got '" + text + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs: must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size: must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr: must be > 0");
  if (!(beta >= 0.0)) throw ConfigError("beta: must be >= 0");
  if (hidden < 1) throw ConfigError("hidden: must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction: must lie in [0, 1)");
  if (patience < 0) throw ConfigError("patience: must be >= 0");
  try {
    perturb.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("perturb: ") + e.what());
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("spec: ") + e.what());
  }
}

std::uint64_t perturbation_seed(const TrainConfig& cfg, int epoch, int batch, int sample) {
  return derive_seed(cfg.seed, {cfg.perturb.seed, static_cast<std::uint64_t>(epoch),
                                static_cast<std::uint64_t>(batch), static_cast<std::uint64_t>(sample)});
}

TrainResult train_decision_focused(const Dataset& ds, const TrainConfig& cfg) {
  TrainConfig c = cfg;
  c.method = Method::Proposed;
  return run_training(ds, c, [&c](const RewardModel& model, const Sample& s, std::uint64_t seed) {
    const Vector reward = model.predict(s.features);
    SampleResult r;
    if (!reward.allFinite()) {
      r.total = std::numeric_limits<double>::quiet_NaN();
      r.grad = model.params.zeros_like();
      return r;
    }
    PerturbConfig pc = c.perturb;
    pc.seed = seed;
    const LossBreakdown lb = hybrid_loss(reward, s.target_y, s.prior_xi, c.beta, c.spec, pc);
    r.perturbed_fy = lb.perturbed_fy;
    r.mse_reg = lb.mse_regularizer;
    r.total = lb.total;
    r.grad = model.gradient(s.features, lb.gradient);
    return r;
  });
}

TrainResult train_two_stage(const Dataset& ds, const TrainConfig& cfg) {
  TrainConfig c = cfg;
  c.method = Method::TwoStage;
  return run_training(ds, c, [](const RewardModel& model, const Sample& s, std::uint64_t) {
    return mse_sample(model, s.features, s.realized_rtp);
  });
}

TrainResult train_direct(const Dataset& ds, const TrainConfig& cfg) {
  TrainConfig c = cfg;
  c.method = Method::Direct;
  return run_training(ds, c, [](const RewardModel& model, const Sample& s, std::uint64_t) {
    return mse_sample(model, s.features, s.target_y);
  });
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
  switch (cfg.method) {
    case Method::Proposed:
      return train_decision_focused(ds, cfg);
    case Method::TwoStage:
      return train_two_stage(ds, cfg);
    case Method::Direct:
      return train_direct(ds, cfg);
  }
  throw ConfigError("unknown method");
}

Prediction predict(const Checkpoint& ck, const Matrix& features) {
  if (features.rows() != ck.lookback || features.cols() != static_cast<Eigen::Index>(ck.channels.size())) {
    std::ostringstream os;
    os << "features are " << features.rows() << "x" << features.cols() << ", checkpoint expects " << ck.lookback
       << "x" << ck.channels.size();
    throw SchemaMismatch(os.str());
  }
  Prediction out;
  const Vector raw = ck.model.predict(features);
  if (ck.method == Method::Direct) {
    const double cap = ck.spec.power_rating;
    out.schedule = schedule_from_net(raw.cwiseMax(-cap).cwiseMin(cap), ck.spec);
    out.feasible = check_feasible(out.schedule, ck.spec, 1e-6).empty();
    return out;
  }
  SolveOptions opt;
  opt.prefer_idle = true;
  out.reward = raw;
  out.schedule = solve_dispatch(raw, ck.spec, opt);
  return out;
}

void write_loss_log_csv(const std::string& path, const std::vector<BatchLog>& log) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out.precision(12);
  out << "epoch,batch,perturbed_fy,mse_reg,total\n";
  for (const BatchLog& b : log)
    out << b.epoch << ',' << b.batch << ',' << b.perturbed_fy << ',' << b.mse_reg << ',' << b.total << '\n';
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path);
  out << nlohmann::json(ck).dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaMismatch("cannot open checkpoint " + path);
  try {
    return nlohmann::json::parse(in).get<Checkpoint>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("checkpoint ") + path + ": " + e.what());
  }
}

}  // namespace dfl
