#pragma once

#include <Eigen/Core>

#include <cstdint>

#include "dfl/errors.hpp"

namespace dfl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// in -> hidden -> hidden -> out, ReLU after the first two layers.
/// Weights are stored (out x in) so that a layer is W x + b.
struct MlpParams {
  Matrix w1, w2, w3;
  Vector b1, b2, b3;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int output_dim() const { return static_cast<int>(w3.rows()); }
  Eigen::Index size() const;

  /// Zero-filled parameters with the given shape.
  static MlpParams zeros(int input_dim, int hidden_dim, int output_dim);
  MlpParams zeros_like() const { return zeros(input_dim(), hidden_dim(), output_dim()); }

  /// w1, b1, w2, b2, w3, b3, each weight matrix row-major.
  Vector flatten() const;
  void assign(const Vector& flat);
  bool same_shape(const MlpParams& other) const;
};

/// Glorot-uniform weights, zero biases; deterministic per seed.
MlpParams init_params(std::uint64_t seed, int input_dim, int output_dim, int hidden_dim = 96);

Vector forward(const MlpParams& params, const Vector& input);

/// Gradient of upstream^T forward(input) with respect to every parameter.
/// ReLU'(0) is taken as 0.
MlpParams backward(const MlpParams& params, const Vector& input, const Vector& upstream);

struct AdamState {
  MlpParams m;
  MlpParams v;
  long step = 0;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double floor = 1e-8;

  static AdamState for_params(const MlpParams& params, double lr = 0.01);
};

/// Bias-corrected Adam update in place. Throws ShapeMismatch.
void adam_step(AdamState& state, MlpParams& params, const MlpParams& grads);

/// Input standardization per feature channel plus an affine output map,
/// so the network works in unit scale while emitting $/MWh or MW.
struct Scaling {
  Vector channel_mean;  // length F
  Vector channel_std;   // length F
  double output_offset = 0.0;
  double output_scale = 1.0;

  /// Flattens an L x F window time-major after standardizing each channel.
  Vector encode(const Matrix& window) const;
};

struct RewardModel {
  MlpParams params;
  Scaling scaling;

  Vector predict(const Matrix& window) const;
  /// Parameter gradient of upstream^T predict(window).
  MlpParams gradient(const Matrix& window, const Vector& upstream) const;
};

}  // namespace dfl
