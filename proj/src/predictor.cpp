#include "dfl/predictor.hpp"

#include <cmath>
#include <random>

namespace dfl {
namespace {

Matrix glorot(std::mt19937_64& rng, int rows, int cols) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix w(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) w(i, j) = dist(rng);
  return w;
}

}  // namespace

Eigen::Index MlpParams::size() const {
  return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
}

MlpParams MlpParams::zeros(int input_dim, int hidden_dim, int output_dim) {
  MlpParams p;
  p.w1 = Matrix::Zero(hidden_dim, input_dim);
  p.b1 = Vector::Zero(hidden_dim);
  p.w2 = Matrix::Zero(hidden_dim, hidden_dim);
  p.b2 = Vector::Zero(hidden_dim);
  p.w3 = Matrix::Zero(output_dim, hidden_dim);
  p.b3 = Vector::Zero(output_dim);
  return p;
}

Vector MlpParams::flatten() const {
  Vector out(size());
  Eigen::Index k = 0;
  auto put_matrix = [&](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) out[k++] = m(i, j);
  };
  auto put_vector = [&](const Vector& v) {
    out.segment(k, v.size()) = v;
    k += v.size();
  };
  put_matrix(w1);
  put_vector(b1);
  put_matrix(w2);
  put_vector(b2);
  put_matrix(w3);
  put_vector(b3);
  return out;
}

void MlpParams::assign(const Vector& flat) {
  if (flat.size() != size()) throw ShapeMismatch("flat parameter vector has the wrong length");
  Eigen::Index k = 0;
  auto get_matrix = [&](Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = flat[k++];
  };
  auto get_vector = [&](Vector& v) {
    v = flat.segment(k, v.size());
    k += v.size();
  };
  get_matrix(w1);
  get_vector(b1);
  get_matrix(w2);
  get_vector(b2);
  get_matrix(w3);
  get_vector(b3);
}

bool MlpParams::same_shape(const MlpParams& o) const {
  auto same = [](const auto& a, const auto& b) { return a.rows() == b.rows() && a.cols() == b.cols(); };
  return same(w1, o.w1) && same(b1, o.b1) && same(w2, o.w2) && same(b2, o.b2) && same(w3, o.w3) &&
         same(b3, o.b3);
}

MlpParams init_params(std::uint64_t seed, int input_dim, int output_dim, int hidden_dim) {
  if (input_dim < 1 || output_dim < 1 || hidden_dim < 1) throw InvalidArgument("layer sizes must be >= 1");
  std::mt19937_64 rng(seed);
  MlpParams p = MlpParams::zeros(input_dim, hidden_dim, output_dim);
  p.w1 = glorot(rng, hidden_dim, input_dim);
  p.w2 = glorot(rng, hidden_dim, hidden_dim);
  p.w3 = glorot(rng, output_dim, hidden_dim);
  return p;
}

Vector forward(const MlpParams& params, const Vector& input) {
  if (input.size() != params.input_dim()) throw DimensionMismatch("input length does not match the first layer");
  const Vector h1 = (params.w1 * input + params.b1).cwiseMax(0.0);
  const Vector h2 = (params.w2 * h1 + params.b2).cwiseMax(0.0);
  return params.w3 * h2 + params.b3;
}

MlpParams backward(const MlpParams& params, const Vector& input, const Vector& upstream) {
  if (input.size() != params.input_dim()) throw DimensionMismatch("input length does not match the first layer");
  if (upstream.size() != params.output_dim()) throw DimensionMismatch("upstream gradient length mismatch");
  const Vector a1 = params.w1 * input + params.b1;
  const Vector h1 = a1.cwiseMax(0.0);
  const Vector a2 = params.w2 * h1 + params.b2;
  const Vector h2 = a2.cwiseMax(0.0);

  MlpParams g = params.zeros_like();
  g.w3 = upstream * h2.transpose();
  g.b3 = upstream;
  Vector d2 = params.w3.transpose() * upstream;
  for (Eigen::Index i = 0; i < d2.size(); ++i)
    if (a2[i] <= 0.0) d2[i] = 0.0;
  g.w2 = d2 * h1.transpose();
  g.b2 = d2;
  Vector d1 = params.w2.transpose() * d2;
  for (Eigen::Index i = 0; i < d1.size(); ++i)
    if (a1[i] <= 0.0) d1[i] = 0.0;
  g.w1 = d1 * input.transpose();
  g.b1 = d1;
  return g;
}

AdamState AdamState::for_params(const MlpParams& params, double lr) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  s.lr = lr;
  return s;
}

void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads) {
  if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v))
    throw ShapeMismatch("Adam state, parameters and gradients must share one shape");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  // Arguments are reshaped views, so assignments write through.
  auto update = [&](auto p, auto m, auto v, auto g) {
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    p -= (state.lr * (m / c1).array() / ((v / c2).array().sqrt() + state.floor)).matrix();
  };
  update(params.w1.reshaped(), state.m.w1.reshaped(), state.v.w1.reshaped(), grads.w1.reshaped());
  update(params.b1.reshaped(), state.m.b1.reshaped(), state.v.b1.reshaped(), grads.b1.reshaped());
  update(params.w2.reshaped(), state.m.w2.reshaped(), state.v.w2.reshaped(), grads.w2.reshaped());
  update(params.b2.reshaped(), state.m.b2.reshaped(), state.v.b2.reshaped(), grads.b2.reshaped());
  update(params.w3.reshaped(), state.m.w3.reshaped(), state.v.w3.reshaped(), grads.w3.reshaped());
  update(params.b3.reshaped(), state.m.b3.reshaped(), state.v.b3.reshaped(), grads.b3.reshaped());
}

Vector Scaling::encode(const Matrix& window) const {
  if (window.cols() != channel_mean.size()) throw DimensionMismatch("window channel count mismatch");
  Vector out(window.size());
  Eigen::Index k = 0;
  for (Eigen::Index l = 0; l < window.rows(); ++l)
    for (Eigen::Index f = 0; f < window.cols(); ++f)
      out[k++] = (window(l, f) - channel_mean[f]) / channel_std[f];
  return out;
}

Vector RewardModel::predict(const Matrix& window) const {
  return (scaling.output_offset + scaling.output_scale * forward(params, scaling.encode(window)).array()).matrix();
}

MlpParams RewardModel::gradient(const Matrix& window, const Vector& upstream) const {
  return backward(params, scaling.encode(window), scaling.output_scale * upstream);
}

}  // namespace dfl
