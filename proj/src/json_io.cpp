#include "dfl/json_io.hpp"

#include <cstdio>
#include <set>

namespace nlohmann {

void adl_serializer<Eigen::VectorXd>::to_json(json& j, const Eigen::VectorXd& v) {
  j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
}

void adl_serializer<Eigen::VectorXd>::from_json(const json& j, Eigen::VectorXd& v) {
  if (!j.is_array()) throw dfl::ParseError("expected an array of numbers");
  v.resize(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
}

void adl_serializer<Eigen::MatrixXd>::to_json(json& j, const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  j = json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

void adl_serializer<Eigen::MatrixXd>::from_json(const json& j, Eigen::MatrixXd& m) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols))
    throw dfl::ParseError("matrix data does not match its shape");
  m.resize(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
}

}  // namespace nlohmann

namespace dfl {
namespace {

// Strict reader for config objects.
class Fields {
 public:
  Fields(const Json& j, std::string context) : j_(j), ctx_(std::move(context)) {
    if (!j_.is_object()) throw ConfigError(ctx_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw ConfigError(ctx_ + "." + key + ": " + e.what());
    }
  }

  const Json* sub(const char* key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!known_.count(item.key())) throw ConfigError(ctx_ + ": unknown key '" + item.key() + "'");
  }

 private:
  const Json& j_;
  std::string ctx_;
  std::set<std::string> known_;
};

}  // namespace

void to_json(Json& j, const StorageSpec& s) {
  j = Json{{"power_rating", s.power_rating}, {"capacity", s.capacity}, {"efficiency", s.efficiency},
           {"initial_soc", s.initial_soc},   {"horizon", s.horizon},   {"step_hours", s.step_hours},
           {"cost_c1", s.cost_c1},           {"cost_c2", s.cost_c2},   {"cost_c3", s.cost_c3},
           {"cost_c4", s.cost_c4}};
  j["terminal_soc_min"] = s.terminal_soc_min ? Json(*s.terminal_soc_min) : Json(nullptr);
}

void from_json(const Json& j, StorageSpec& s) {
  Fields f(j, "spec");
  f.get("power_rating", s.power_rating);
  f.get("capacity", s.capacity);
  f.get("efficiency", s.efficiency);
  f.get("initial_soc", s.initial_soc);
  f.get("horizon", s.horizon);
  f.get("step_hours", s.step_hours);
  f.get("cost_c1", s.cost_c1);
  f.get("cost_c2", s.cost_c2);
  f.get("cost_c3", s.cost_c3);
  f.get("cost_c4", s.cost_c4);
  if (const Json* t = f.sub("terminal_soc_min")) {
    if (t->is_null())
      s.terminal_soc_min.reset();
    else if (t->is_number())
      s.terminal_soc_min = t->get<double>();
    else
      throw ConfigError("spec.terminal_soc_min: expected a number or null");
  }
  f.finish();
}

void to_json(Json& j, const PerturbConfig& c) {
  j = Json{{"epsilon", c.epsilon}, {"num_samples", c.num_samples}, {"seed", c.seed}};
}

void from_json(const Json& j, PerturbConfig& c) {
  Fields f(j, "perturb");
  f.get("epsilon", c.epsilon);
  f.get("num_samples", c.num_samples);
  f.get("seed", c.seed);
  f.finish();
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"task", to_string(c.task)},
           {"method", to_string(c.method)},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"lr", c.lr},
           {"beta", c.beta},
           {"hidden", c.hidden},
           {"perturb", c.perturb},
           {"spec", c.spec},
           {"seed", c.seed},
           {"validation_fraction", c.validation_fraction},
           {"patience", c.patience}};
}

void from_json(const Json& j, TrainConfig& c) {
  Fields f(j, "train");
  std::string task = to_string(c.task), method = to_string(c.method);
  f.get("task", task);
  f.get("method", method);
  c.task = parse_task(task);
  c.method = parse_method(method);
  f.get("epochs", c.epochs);
  f.get("batch_size", c.batch_size);
  f.get("lr", c.lr);
  f.get("beta", c.beta);
  f.get("hidden", c.hidden);
  if (const Json* p = f.sub("perturb")) c.perturb = p->get<PerturbConfig>();
  if (const Json* s = f.sub("spec")) from_json(*s, c.spec);
  f.get("seed", c.seed);
  f.get("validation_fraction", c.validation_fraction);
  f.get("patience", c.patience);
  f.finish();
}

void to_json(Json& j, const SyntheticGenConfig& c) {
  j = Json{{"alpha_low", c.alpha_low}, {"alpha_high", c.alpha_high}, {"noise_std", c.noise_std}, {"seed", c.seed}};
}

void from_json(const Json& j, SyntheticGenConfig& c) {
  Fields f(j, "synthetic");
  f.get("alpha_low", c.alpha_low);
  f.get("alpha_high", c.alpha_high);
  f.get("noise_std", c.noise_std);
  f.get("seed", c.seed);
  f.finish();
}

void to_json(Json& j, const DispatchSchedule& s) {
  j = Json{{"p", s.discharge}, {"b", s.charge}, {"e", s.soc}, {"y", s.net}, {"objective", s.objective}};
}

void from_json(const Json& j, DispatchSchedule& s) {
  s.discharge = j.at("p").get<Vector>();
  s.charge = j.at("b").get<Vector>();
  s.soc = j.at("e").get<Vector>();
  s.net = j.at("y").get<Vector>();
  s.objective = j.at("objective").get<double>();
}

void to_json(Json& j, const LossBreakdown& l) {
  j = Json{{"perturbed_fy", l.perturbed_fy},
           {"mse_regularizer", l.mse_regularizer},
           {"total", l.total},
           {"gradient", l.gradient}};
}

void to_json(Json& j, const Sample& s) {
  j = Json{{"features", s.features}, {"target_y", s.target_y},   {"prior_xi", s.prior_xi},
           {"realized_rtp", s.realized_rtp}, {"start", s.start}, {"index", s.index}};
}

void from_json(const Json& j, Sample& s) {
  s.features = j.at("features").get<Matrix>();
  s.target_y = j.at("target_y").get<Vector>();
  s.prior_xi = j.at("prior_xi").get<Vector>();
  s.realized_rtp = j.at("realized_rtp").get<Vector>();
  s.start = j.at("start").get<Timestamp>();
  s.index = j.at("index").get<int>();
}

void to_json(Json& j, const MlpParams& p) {
  j = Json{{"input_dim", p.input_dim()}, {"hidden_dim", p.hidden_dim()}, {"output_dim", p.output_dim()},
           {"w1", p.w1}, {"b1", p.b1}, {"w2", p.w2}, {"b2", p.b2}, {"w3", p.w3}, {"b3", p.b3}};
}

void from_json(const Json& j, MlpParams& p) {
  p = MlpParams::zeros(j.at("input_dim").get<int>(), j.at("hidden_dim").get<int>(), j.at("output_dim").get<int>());
  MlpParams read;
  read.w1 = j.at("w1").get<Matrix>();
  read.b1 = j.at("b1").get<Vector>();
  read.w2 = j.at("w2").get<Matrix>();
  read.b2 = j.at("b2").get<Vector>();
  read.w3 = j.at("w3").get<Matrix>();
  read.b3 = j.at("b3").get<Vector>();
  if (!p.same_shape(read)) throw SchemaMismatch("weight shapes disagree with the stored dimensions");
  p = std::move(read);
}

void to_json(Json& j, const AdamState& a) {
  j = Json{{"step", a.step},   {"lr", a.lr},       {"beta1", a.beta1}, {"beta2", a.beta2},
           {"floor", a.floor}, {"m", a.m},         {"v", a.v}};
}

void from_json(const Json& j, AdamState& a) {
  a.step = j.at("step").get<long>();
  a.lr = j.at("lr").get<double>();
  a.beta1 = j.at("beta1").get<double>();
  a.beta2 = j.at("beta2").get<double>();
  a.floor = j.at("floor").get<double>();
  a.m = j.at("m").get<MlpParams>();
  a.v = j.at("v").get<MlpParams>();
}

void to_json(Json& j, const Scaling& s) {
  j = Json{{"channel_mean", s.channel_mean},
           {"channel_std", s.channel_std},
           {"output_offset", s.output_offset},
           {"output_scale", s.output_scale}};
}

void from_json(const Json& j, Scaling& s) {
  s.channel_mean = j.at("channel_mean").get<Vector>();
  s.channel_std = j.at("channel_std").get<Vector>();
  s.output_offset = j.at("output_offset").get<double>();
  s.output_scale = j.at("output_scale").get<double>();
}

void to_json(Json& j, const Checkpoint& c) {
  j = Json{{"format", "dfl-checkpoint-1"},
           {"task", to_string(c.task)},
           {"method", to_string(c.method)},
           {"lookback", c.lookback},
           {"horizon", c.horizon},
           {"channels", c.channels},
           {"spec", c.spec},
           {"seed", c.seed},
           {"config_hash", c.config_hash},
           {"scaling", c.model.scaling},
           {"params", c.model.params},
           {"adam", c.adam}};
}

void from_json(const Json& j, Checkpoint& c) {
  if (j.value("format", "") != "dfl-checkpoint-1") throw SchemaMismatch("not a checkpoint (format tag missing)");
  try {
    c.task = parse_task(j.at("task").get<std::string>());
    c.method = parse_method(j.at("method").get<std::string>());
    c.spec = j.at("spec").get<StorageSpec>();
  } catch (const ConfigError& e) {
    throw SchemaMismatch(e.what());
  }
  c.lookback = j.at("lookback").get<int>();
  c.horizon = j.at("horizon").get<int>();
  c.channels = j.at("channels").get<std::vector<std::string>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.config_hash = j.at("config_hash").get<std::string>();
  c.model.scaling = j.at("scaling").get<Scaling>();
  c.model.params = j.at("params").get<MlpParams>();
  c.adam = j.at("adam").get<AdamState>();
  if (c.model.params.input_dim() != c.lookback * static_cast<int>(c.channels.size()) ||
      c.model.params.output_dim() != c.horizon || c.spec.horizon != c.horizon)
    throw SchemaMismatch("checkpoint dimensions are inconsistent");
}

void to_json(Json& j, const ConfusionCounts& c) { j = Json{{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}}; }

void to_json(Json& j, const MetricsReport& r) {
  j = Json{{"mode", to_string(r.mode)},     {"precision", r.precision}, {"accuracy", r.accuracy},
           {"recall", r.recall},            {"f1", r.f1},               {"degenerate", r.degenerate},
           {"counts", r.counts},            {"threshold", r.threshold}, {"tolerance_steps", r.tolerance_steps}};
}

std::string json_hash(const Json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const TrainConfig& cfg) { return json_hash(Json(cfg)); }

}  // namespace dfl
