#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace sevalign {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Feed-forward networks
// ---------------------------------------------------------------------------

/// Affine layer y = W x + b, W stored as (out x in).
struct DenseLayer {
  Matrix weight;
  Vector bias;
};

/// Stack of dense layers; tanh after every layer except the last (identity).
struct Mlp {
  std::vector<DenseLayer> layers;

  Index input_width() const;
  Index output_width() const;
  Index parameter_count() const;
};

/// Builds an MLP with layer widths `widths[0] -> widths[1] -> ...`.
/// Weights are Glorot-uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
Mlp make_mlp(std::span<const int> widths, std::mt19937_64& rng);

/// Same shapes as `net`, every parameter zero. Used as a gradient buffer.
Mlp zeros_like(const Mlp& net);

/// Throws ShapeError naming the first layer that breaks the width chain.
void check_layer_chain(const Mlp& net);

Vector mlp_apply(const Mlp& net, const Vector& input);

/// Post-activation outputs of every layer; activations[0] is the input batch.
struct MlpTrace {
  std::vector<Matrix> activations;
};

/// Batched forward pass; each column of `inputs` is one sample.
Matrix mlp_forward(const Mlp& net, const Matrix& inputs, MlpTrace* trace = nullptr);

/// Backpropagates `d_outputs` through a traced forward pass. Parameter
/// gradients are accumulated into `grads` (if non-null); returns d(inputs).
Matrix mlp_backward(const Mlp& net, const MlpTrace& trace, const Matrix& d_outputs,
                    Mlp* grads);

/// Writes every parameter of `net` into `out` starting at `offset`; returns the
/// offset one past the last written entry. Layout: per layer, weight
/// (column-major) then bias.
Index write_params(const Mlp& net, Vector& out, Index offset);
Index read_params(Mlp& net, const Vector& in, Index offset);

// ---------------------------------------------------------------------------
// Seeding
// ---------------------------------------------------------------------------

/// Derives an independent 64-bit seed for sub-stream `stream` of `seed`
/// (splitmix64 finalizer over both words).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// ---------------------------------------------------------------------------
// Scalar helpers
// ---------------------------------------------------------------------------

double sigmoid(double z);
/// log(1 + exp(z)) without overflow.
double softplus(double z);

/// Numerically stable softmax (max-subtracted). Throws on empty input.
Vector softmax(const Vector& scores);

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamState {
  explicit AdamState(Index size = 0);

  Vector first_moment;
  Vector second_moment;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(Vector& params, const Vector& grads, AdamState& state, double lr);

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// Scalar objective over a flat parameter vector. When `grad` is non-null the
/// callee must fill it with the analytic gradient (same length as params).
using Objective = std::function<double(const Vector& params, Vector* grad)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  Index worst_parameter = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool passed = false;
};

/// Compares the analytic gradient of `fn` at `params` against central
/// differences (f(x+h) - f(x-h)) / 2h, coordinate by coordinate. Relative
/// error uses max(|analytic|, |numeric|, 1e-8) as denominator.
GradCheckReport grad_check(const Objective& fn, const Vector& params, double h,
                           double tol);

}  // namespace sevalign
