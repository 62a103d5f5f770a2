#pragma once

#include <string>

#include <json.hpp>

#include "dfl/data.hpp"
#include "dfl/eval.hpp"
#include "dfl/perturbed_layer.hpp"
#include "dfl/predictor.hpp"
#include "dfl/storage_opt.hpp"
#include "dfl/training.hpp"

namespace nlohmann {

template <>
struct adl_serializer<Eigen::VectorXd> {
  static void to_json(json& j, const Eigen::VectorXd& v);
  static void from_json(const json& j, Eigen::VectorXd& v);
};

/// {"rows", "cols", "data"} with data row-major.
template <>
struct adl_serializer<Eigen::MatrixXd> {
  static void to_json(json& j, const Eigen::MatrixXd& m);
  static void from_json(const json& j, Eigen::MatrixXd& m);
};

}  // namespace nlohmann

namespace dfl {

using Json = nlohmann::json;

// Config-like types are read strictly: unknown keys and wrong types raise
// ConfigError naming the field; absent keys keep their defaults.
void to_json(Json& j, const StorageSpec& s);
void from_json(const Json& j, StorageSpec& s);
void to_json(Json& j, const PerturbConfig& c);
void from_json(const Json& j, PerturbConfig& c);
void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);
void to_json(Json& j, const SyntheticGenConfig& c);
void from_json(const Json& j, SyntheticGenConfig& c);

void to_json(Json& j, const DispatchSchedule& s);
void from_json(const Json& j, DispatchSchedule& s);
void to_json(Json& j, const LossBreakdown& l);
void to_json(Json& j, const Sample& s);
void from_json(const Json& j, Sample& s);
void to_json(Json& j, const MlpParams& p);
void from_json(const Json& j, MlpParams& p);
void to_json(Json& j, const AdamState& a);
void from_json(const Json& j, AdamState& a);
void to_json(Json& j, const Scaling& s);
void from_json(const Json& j, Scaling& s);
void to_json(Json& j, const Checkpoint& c);
void from_json(const Json& j, Checkpoint& c);
void to_json(Json& j, const ConfusionCounts& c);
void to_json(Json& j, const MetricsReport& r);

/// 64-bit FNV-1a of the compact dump (object keys are sorted), as 16 hex digits.
std::string json_hash(const Json& j);
std::string config_hash(const TrainConfig& cfg);

}  // namespace dfl
