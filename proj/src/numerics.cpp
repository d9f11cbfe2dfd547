#include "sevalign/numerics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "sevalign/errors.hpp"

namespace sevalign {

Index Mlp::input_width() const {
  return layers.empty() ? 0 : layers.front().weight.cols();
}

Index Mlp::output_width() const {
  return layers.empty() ? 0 : layers.back().weight.rows();
}

Index Mlp::parameter_count() const {
  Index n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

Mlp make_mlp(std::span<const int> widths, std::mt19937_64& rng) {
  if (widths.size() < 2) throw ShapeError("mlp needs at least an input and an output width");
  Mlp net;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    if (fan_in <= 0 || fan_out <= 0) {
      throw ShapeError("layer " + std::to_string(l) + ": widths must be positive");
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    DenseLayer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    // Column-major fill keeps the draw order tied to the storage order.
    for (Index c = 0; c < layer.weight.cols(); ++c)
      for (Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = dist(rng);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Mlp zeros_like(const Mlp& net) {
  Mlp z;
  z.layers.reserve(net.layers.size());
  for (const auto& layer : net.layers) {
    z.layers.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()),
                        Vector::Zero(layer.bias.size())});
  }
  return z;
}

void check_layer_chain(const Mlp& net) {
  if (net.layers.empty()) throw ShapeError("mlp has no layers");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    if (layer.bias.size() != layer.weight.rows()) {
      throw ShapeError("layer " + std::to_string(l) + ": bias length " +
                       std::to_string(layer.bias.size()) + " != output width " +
                       std::to_string(layer.weight.rows()));
    }
    if (l > 0 && layer.weight.cols() != net.layers[l - 1].weight.rows()) {
      throw ShapeError("layer " + std::to_string(l) + ": input width " +
                       std::to_string(layer.weight.cols()) + " != previous output width " +
                       std::to_string(net.layers[l - 1].weight.rows()));
    }
  }
}

Vector mlp_apply(const Mlp& net, const Vector& input) {
  return mlp_forward(net, input);
}

Matrix mlp_forward(const Mlp& net, const Matrix& inputs, MlpTrace* trace) {
  if (net.layers.empty()) throw ShapeError("mlp has no layers");
  if (inputs.rows() != net.input_width()) {
    throw ShapeError("layer 0: input length " + std::to_string(inputs.rows()) +
                     " != expected " + std::to_string(net.input_width()));
  }
  if (trace) {
    trace->activations.clear();
    trace->activations.reserve(net.layers.size() + 1);
    trace->activations.push_back(inputs);
  }
  Matrix h = inputs;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    if (layer.weight.cols() != h.rows()) {
      throw ShapeError("layer " + std::to_string(l) + ": input width " +
                       std::to_string(layer.weight.cols()) + " != incoming " +
                       std::to_string(h.rows()));
    }
    Matrix z = layer.weight * h;
    z.colwise() += layer.bias;
    if (l + 1 < net.layers.size()) z = z.array().tanh().matrix();
    h = std::move(z);
    if (trace) trace->activations.push_back(h);
  }
  return h;
}

Matrix mlp_backward(const Mlp& net, const MlpTrace& trace, const Matrix& d_outputs,
                    Mlp* grads) {
  if (trace.activations.size() != net.layers.size() + 1) {
    throw ShapeError("mlp trace does not match network depth");
  }
  Matrix delta = d_outputs;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& layer = net.layers[l];
    if (l + 1 < net.layers.size()) {
      // tanh'(z) = 1 - tanh(z)^2, and activations[l+1] holds tanh(z).
      const auto& a = trace.activations[l + 1];
      delta = (delta.array() * (1.0 - a.array().square())).matrix();
    }
    const Matrix& input = trace.activations[l];
    if (grads) {
      grads->layers[l].weight.noalias() += delta * input.transpose();
      grads->layers[l].bias += delta.rowwise().sum();
    }
    delta = layer.weight.transpose() * delta;
  }
  return delta;
}

namespace {

void check_span(const Mlp& net, Index available, Index offset) {
  if (offset < 0 || offset + net.parameter_count() > available) {
    throw ShapeError("parameter buffer of length " + std::to_string(available) +
                     " cannot hold " + std::to_string(net.parameter_count()) +
                     " values at offset " + std::to_string(offset));
  }
}

}  // namespace

Index write_params(const Mlp& net, Vector& out, Index offset) {
  check_span(net, out.size(), offset);
  for (const auto& layer : net.layers) {
    out.segment(offset, layer.weight.size()) =
        Eigen::Map<const Vector>(layer.weight.data(), layer.weight.size());
    offset += layer.weight.size();
    out.segment(offset, layer.bias.size()) = layer.bias;
    offset += layer.bias.size();
  }
  return offset;
}

Index read_params(Mlp& net, const Vector& in, Index offset) {
  check_span(net, in.size(), offset);
  for (auto& layer : net.layers) {
    Eigen::Map<Vector>(layer.weight.data(), layer.weight.size()) =
        in.segment(offset, layer.weight.size());
    offset += layer.weight.size();
    layer.bias = in.segment(offset, layer.bias.size());
    offset += layer.bias.size();
  }
  return offset;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(seed) ^ (stream * 0xd6e8feb86659fd93ULL + 1));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

Vector softmax(const Vector& scores) {
  if (scores.size() == 0) throw ShapeError("softmax of an empty vector");
  const double m = scores.maxCoeff();
  Vector e = (scores.array() - m).exp().matrix();
  return e / e.sum();
}

AdamState::AdamState(Index size)
    : first_moment(Vector::Zero(size)), second_moment(Vector::Zero(size)) {}

void adam_step(Vector& params, const Vector& grads, AdamState& state, double lr) {
  if (!(lr > 0)) throw ValidationError("adam: learning rate must be positive");
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw ShapeError("adam: gradient/state length " + std::to_string(grads.size()) +
                     " does not match " + std::to_string(params.size()) + " parameters");
  }
  if (!grads.allFinite()) throw ValidationError("adam: non-finite gradient");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  state.first_moment = state.beta1 * state.first_moment + (1 - state.beta1) * grads;
  state.second_moment =
      state.beta2 * state.second_moment + (1 - state.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  params.array() -= lr * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

GradCheckReport grad_check(const Objective& fn, const Vector& params, double h,
                           double tol) {
  if (!(h > 0)) throw ValidationError("grad_check: step must be positive");
  Vector analytic(params.size());
  const double f0 = fn(params, &analytic);
  if (!std::isfinite(f0)) throw ValidationError("grad_check: non-finite objective value");
  if (analytic.size() != params.size()) {
    throw ShapeError("grad_check: analytic gradient has wrong length");
  }

  GradCheckReport report;
  Vector probe = params;
  for (Index i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + h;
    const double up = fn(probe, nullptr);
    probe[i] = params[i] - h;
    const double down = fn(probe, nullptr);
    probe[i] = params[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw ValidationError("grad_check: non-finite objective at parameter " +
                            std::to_string(i));
    }
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > report.max_rel_error || report.worst_parameter < 0) {
      report.max_rel_error = rel;
      report.worst_parameter = i;
      report.analytic_at_worst = analytic[i];
      report.numeric_at_worst = numeric;
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace sevalign
