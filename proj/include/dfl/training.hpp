#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dfl/data.hpp"
#include "dfl/perturbed_layer.hpp"
#include "dfl/predictor.hpp"
#include "dfl/storage_opt.hpp"

namespace dfl {

enum class Task { Arbitrage, Behavior };
enum class Method { Proposed, TwoStage, Direct };

std::string to_string(Task task);
std::string to_string(Method method);
Task parse_task(const std::string& text);
Method parse_method(const std::string& text);

struct TrainConfig {
  Task task = Task::Behavior;
  Method method = Method::Proposed;
  int epochs = 50;
  int batch_size = 32;
  double lr = 0.01;
  double beta = 0.001;
  int hidden = 96;
  PerturbConfig perturb;
  StorageSpec spec;
  std::uint64_t seed = 0;
  /// Fraction of the latest windows held out for validation loss; 0 disables.
  double validation_fraction = 0.0;
  /// Stop after this many epochs without validation improvement; 0 disables.
  int patience = 0;

  void validate() const;  // ConfigError with the offending field
};

struct Checkpoint {
  Task task = Task::Behavior;
  Method method = Method::Proposed;
  int lookback = 24;
  int horizon = 24;
  std::vector<std::string> channels;
  RewardModel model;
  AdamState adam;
  StorageSpec spec;
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct BatchLog {
  int epoch = 0;
  int batch = 0;
  double perturbed_fy = 0.0;
  double mse_reg = 0.0;
  double total = 0.0;
};

struct EpochLog {
  int epoch = 0;
  double mean_total = 0.0;
  double validation = 0.0;  // NaN without a validation split
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<BatchLog> batches;
  std::vector<EpochLog> epochs;
};

/// Hybrid perturbed Fenchel-Young training through the dispatch layer.
TrainResult train_decision_focused(const Dataset& dataset, const TrainConfig& cfg);
/// MSE on the realized RTP of the target window.
TrainResult train_two_stage(const Dataset& dataset, const TrainConfig& cfg);
/// MSE on the target decisions, network output read as net dispatch.
TrainResult train_direct(const Dataset& dataset, const TrainConfig& cfg);
/// Dispatches on cfg.method.
TrainResult train(const Dataset& dataset, const TrainConfig& cfg);

struct Prediction {
  DispatchSchedule schedule;
  Vector reward;         // predicted reward, empty for the direct method
  bool feasible = true;  // false when a direct output breaks the SoC dynamics
};

/// Proposed and two-stage route the predicted reward through solve_dispatch;
/// direct clips the raw output to [-P, P]. Throws SchemaMismatch when the
/// window shape differs from the checkpoint.
Prediction predict(const Checkpoint& checkpoint, const Matrix& features);

/// Seed of the perturbation draws for one sample in one batch (epochs count
/// from 1). Validation passes use epoch 0, batch -1.
std::uint64_t perturbation_seed(const TrainConfig& cfg, int epoch, int batch, int sample);

void write_loss_log_csv(const std::string& path, const std::vector<BatchLog>& log);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dfl
