#pragma once

// Minimal recurrent network with reverse-mode gradients.
//
//   input -> [dense + swish] x input_layers -> GRU -> [dense + swish] x hidden_layers
//         -> dense (raw outputs)
//
// The GRU update is
//   z  = sigmoid(W_z [h; u] + b_z)
//   r  = sigmoid(W_r [h; u] + b_r)
//   c  = tanh(W_c [r * h; u] + b_c)
//   h' = (1 - z) * h + z * c
// where u is the output of the input stack.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seqsynth/error.hpp"
#include "seqsynth/random.hpp"

namespace seqsynth::nn {

// ---------------------------------------------------------------------------
// Activations

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + e^x) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

inline double swish(double x) { return x * sigmoid(x); }

inline double swish_derivative(double x) {
  const double s = sigmoid(x);
  return s + x * s * (1.0 - s);
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const double peak = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& v : out) total += (v = std::exp(v - peak));
  for (double& v : out) v /= total;
  return out;
}

// ---------------------------------------------------------------------------
// Parameters

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct Dense {
  Matrix weight;
  std::vector<double> bias;

  Dense() = default;
  Dense(std::size_t out, std::size_t in) : weight(out, in), bias(out, 0.0) {}
};

struct Gru {
  Matrix update, reset, candidate;  // hidden x (hidden + input)
  std::vector<double> update_bias, reset_bias, candidate_bias;

  Gru() = default;
  Gru(std::size_t hidden, std::size_t input)
      : update(hidden, hidden + input),
        reset(hidden, hidden + input),
        candidate(hidden, hidden + input),
        update_bias(hidden, 0.0),
        reset_bias(hidden, 0.0),
        candidate_bias(hidden, 0.0) {}

  std::size_t hidden() const { return update.rows; }
};

struct NetworkShape {
  std::size_t input_width = 0;
  std::size_t hidden = 64;
  std::size_t output_width = 0;
  std::size_t input_layers = 1;
  std::size_t hidden_layers = 1;

  bool operator==(const NetworkShape&) const = default;
};

struct WeightSet {
  std::vector<Dense> input_layers;
  Gru gru;
  std::vector<Dense> hidden_layers;
  Dense output;

  WeightSet() = default;
  explicit WeightSet(const NetworkShape& shape) : gru(shape.hidden, shape.input_layers > 0 ? shape.hidden : shape.input_width) {
    for (std::size_t l = 0; l < shape.input_layers; ++l) {
      input_layers.emplace_back(shape.hidden, l == 0 ? shape.input_width : shape.hidden);
    }
    for (std::size_t l = 0; l < shape.hidden_layers; ++l) hidden_layers.emplace_back(shape.hidden, shape.hidden);
    output = Dense(shape.output_width, shape.hidden);
  }

  NetworkShape shape() const {
    return {input_layers.empty() ? gru.update.cols - gru.hidden() : input_layers.front().weight.cols, gru.hidden(),
            output.weight.rows, input_layers.size(), hidden_layers.size()};
  }
};

/// Gradients share the layout of the weights.
using Gradient = WeightSet;

template <class Values>
struct BasicTensorRef {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  Values* values;
};
using TensorRef = BasicTensorRef<std::vector<double>>;
using ConstTensorRef = BasicTensorRef<const std::vector<double>>;

namespace detail {

template <class W, class Ref>
std::vector<Ref> collect_tensors(W& w) {
  std::vector<Ref> refs;
  auto add_matrix = [&](std::string name, auto& m) { refs.push_back({std::move(name), m.rows, m.cols, &m.values}); };
  auto add_vector = [&](std::string name, auto& v) { refs.push_back({std::move(name), v.size(), 1, &v}); };
  auto add_dense = [&](const std::string& name, auto& d) {
    add_matrix(name + ".weight", d.weight);
    add_vector(name + ".bias", d.bias);
  };
  for (std::size_t l = 0; l < w.input_layers.size(); ++l) add_dense("input." + std::to_string(l), w.input_layers[l]);
  add_matrix("gru.update", w.gru.update);
  add_vector("gru.update_bias", w.gru.update_bias);
  add_matrix("gru.reset", w.gru.reset);
  add_vector("gru.reset_bias", w.gru.reset_bias);
  add_matrix("gru.candidate", w.gru.candidate);
  add_vector("gru.candidate_bias", w.gru.candidate_bias);
  for (std::size_t l = 0; l < w.hidden_layers.size(); ++l) add_dense("hidden." + std::to_string(l), w.hidden_layers[l]);
  add_dense("output", w.output);
  return refs;
}

}  // namespace detail

/// Every parameter tensor in a fixed canonical order.
inline std::vector<TensorRef> tensors(WeightSet& w) { return detail::collect_tensors<WeightSet, TensorRef>(w); }
inline std::vector<ConstTensorRef> tensors(const WeightSet& w) {
  return detail::collect_tensors<const WeightSet, ConstTensorRef>(w);
}

inline std::size_t parameter_count(const WeightSet& w) {
  std::size_t n = 0;
  for (const auto& t : tensors(w)) n += t.values->size();
  return n;
}

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases alike.
inline void initialize(WeightSet& w, Rng& rng) {
  auto fill = [&](std::vector<double>& values, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (double& v : values) v = (2.0 * rng.uniform() - 1.0) * bound;
  };
  auto fill_dense = [&](Dense& d) {
    fill(d.weight.values, d.weight.cols);
    fill(d.bias, d.weight.cols);
  };
  for (auto& d : w.input_layers) fill_dense(d);
  const std::size_t gru_fan_in = w.gru.update.cols;
  fill(w.gru.update.values, gru_fan_in);
  fill(w.gru.update_bias, gru_fan_in);
  fill(w.gru.reset.values, gru_fan_in);
  fill(w.gru.reset_bias, gru_fan_in);
  fill(w.gru.candidate.values, gru_fan_in);
  fill(w.gru.candidate_bias, gru_fan_in);
  for (auto& d : w.hidden_layers) fill_dense(d);
  fill_dense(w.output);
}

inline bool all_finite(const WeightSet& w) {
  for (const auto& t : tensors(w)) {
    for (double v : *t.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Forward primitives

/// W x + b.
inline std::vector<double> dense(const Matrix& weight, std::span<const double> bias, std::span<const double> x) {
  if (weight.cols != x.size() || weight.rows != bias.size()) {
    throw Error(ErrorCode::ShapeMismatch, "dense: weight is " + std::to_string(weight.rows) + "x" +
                                              std::to_string(weight.cols) + ", bias " + std::to_string(bias.size()) +
                                              ", input " + std::to_string(x.size()));
  }
  std::vector<double> y(bias.begin(), bias.end());
  for (std::size_t r = 0; r < weight.rows; ++r) {
    const double* row = &weight.values[r * weight.cols];
    double acc = 0.0;
    for (std::size_t c = 0; c < weight.cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
  return y;
}

inline std::vector<double> dense(const Dense& layer, std::span<const double> x) { return dense(layer.weight, layer.bias, x); }

struct GruGates {
  std::vector<double> update, reset, candidate, next;
};

inline GruGates gru_gates(const Gru& gru, std::span<const double> h_prev, std::span<const double> x) {
  const std::size_t h = gru.hidden();
  if (h_prev.size() != h || gru.update.cols != h + x.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gru_step: hidden " + std::to_string(h_prev.size()) + ", input " +
                                              std::to_string(x.size()) + " for a cell of width " +
                                              std::to_string(gru.update.cols));
  }
  std::vector<double> joined(h_prev.begin(), h_prev.end());
  joined.insert(joined.end(), x.begin(), x.end());

  GruGates g;
  g.update = dense(gru.update, gru.update_bias, joined);
  g.reset = dense(gru.reset, gru.reset_bias, joined);
  for (std::size_t i = 0; i < h; ++i) {
    g.update[i] = sigmoid(g.update[i]);
    g.reset[i] = sigmoid(g.reset[i]);
    joined[i] = g.reset[i] * h_prev[i];
  }
  g.candidate = dense(gru.candidate, gru.candidate_bias, joined);
  g.next.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    g.candidate[i] = std::tanh(g.candidate[i]);
    g.next[i] = (1.0 - g.update[i]) * h_prev[i] + g.update[i] * g.candidate[i];
  }
  return g;
}

inline std::vector<double> gru_step(const Gru& gru, std::span<const double> h_prev, std::span<const double> x) {
  return gru_gates(gru, h_prev, x).next;
}

// ---------------------------------------------------------------------------
// Recorded forward pass and backpropagation through time

struct StepRecord {
  std::vector<std::vector<double>> input_in, input_pre;    // per input layer
  std::vector<double> gru_input;
  std::vector<double> h_prev;
  GruGates gates;
  std::vector<std::vector<double>> hidden_in, hidden_pre;  // per hidden layer
  std::vector<double> head_input;
  std::vector<double> output;
};

struct Tape {
  std::vector<StepRecord> steps;
};

/// Runs the network over one sequence from a zero hidden state, one output
/// per input, recording everything backward() needs.
inline Tape forward(const WeightSet& w, std::span<const std::vector<double>> inputs) {
  Tape tape;
  tape.steps.reserve(inputs.size());
  std::vector<double> h(w.gru.hidden(), 0.0);
  for (const auto& x : inputs) {
    StepRecord s;
    std::vector<double> act = x;
    for (const auto& layer : w.input_layers) {
      s.input_in.push_back(act);
      s.input_pre.push_back(dense(layer, act));
      act = s.input_pre.back();
      for (double& v : act) v = swish(v);
    }
    s.gru_input = act;
    s.h_prev = h;
    s.gates = gru_gates(w.gru, h, act);
    h = s.gates.next;
    act = h;
    for (const auto& layer : w.hidden_layers) {
      s.hidden_in.push_back(act);
      s.hidden_pre.push_back(dense(layer, act));
      act = s.hidden_pre.back();
      for (double& v : act) v = swish(v);
    }
    s.head_input = act;
    s.output = dense(w.output, act);
    tape.steps.push_back(std::move(s));
  }
  return tape;
}

/// Single-step evaluation for autoregressive sampling; advances hidden.
inline std::vector<double> step(const WeightSet& w, std::vector<double>& hidden, std::span<const double> x) {
  std::vector<double> act(x.begin(), x.end());
  for (const auto& layer : w.input_layers) {
    act = dense(layer, act);
    for (double& v : act) v = swish(v);
  }
  hidden = gru_step(w.gru, hidden, act);
  act = hidden;
  for (const auto& layer : w.hidden_layers) {
    act = dense(layer, act);
    for (double& v : act) v = swish(v);
  }
  return dense(w.output, act);
}

namespace detail {

// grad.weight += d ⊗ in; grad.bias += d; returns W^T d when wanted.
inline void dense_backward(const Matrix& weight, std::span<const double> d, std::span<const double> in, Matrix& gw,
                           std::vector<double>& gb, std::vector<double>* d_in) {
  for (std::size_t r = 0; r < weight.rows; ++r) {
    const double dr = d[r];
    gb[r] += dr;
    if (dr == 0.0) continue;
    double* grow = &gw.values[r * weight.cols];
    for (std::size_t c = 0; c < weight.cols; ++c) grow[c] += dr * in[c];
  }
  if (d_in) {
    d_in->assign(weight.cols, 0.0);
    for (std::size_t r = 0; r < weight.rows; ++r) {
      const double dr = d[r];
      if (dr == 0.0) continue;
      const double* row = &weight.values[r * weight.cols];
      for (std::size_t c = 0; c < weight.cols; ++c) (*d_in)[c] += row[c] * dr;
    }
  }
}

}  // namespace detail

/// Adds the gradient of a scalar loss into grad, given dLoss/dOutput for
/// every recorded step.
inline void backward(const WeightSet& w, const Tape& tape, std::span<const std::vector<double>> output_grads,
                     Gradient& grad) {
  if (output_grads.size() != tape.steps.size()) {
    throw Error(ErrorCode::ShapeMismatch, "backward: one output gradient per step is required");
  }
  const std::size_t h = w.gru.hidden();
  std::vector<double> dh_carry(h, 0.0);
  std::vector<double> d_cur, d_next, d_pre;

  for (std::size_t t = tape.steps.size(); t-- > 0;) {
    const auto& s = tape.steps[t];
    if (output_grads[t].size() != w.output.weight.rows) {
      throw Error(ErrorCode::ShapeMismatch, "backward: output gradient has the wrong width");
    }
    detail::dense_backward(w.output.weight, output_grads[t], s.head_input, grad.output.weight, grad.output.bias, &d_cur);

    for (std::size_t l = w.hidden_layers.size(); l-- > 0;) {
      d_pre.resize(d_cur.size());
      for (std::size_t i = 0; i < d_cur.size(); ++i) d_pre[i] = d_cur[i] * swish_derivative(s.hidden_pre[l][i]);
      detail::dense_backward(w.hidden_layers[l].weight, d_pre, s.hidden_in[l], grad.hidden_layers[l].weight,
                             grad.hidden_layers[l].bias, &d_cur);
    }

    // d_cur is now dL/dh_next from this step's output; add the recurrent part.
    std::vector<double> dh(h);
    for (std::size_t i = 0; i < h; ++i) dh[i] = d_cur[i] + dh_carry[i];

    const auto& g = s.gates;
    const std::size_t in_width = s.gru_input.size();
    std::vector<double> dh_prev(h), da_update(h), da_reset(h), da_candidate(h);
    for (std::size_t i = 0; i < h; ++i) {
      const double dz = dh[i] * (g.candidate[i] - s.h_prev[i]);
      const double dc = dh[i] * g.update[i];
      dh_prev[i] = dh[i] * (1.0 - g.update[i]);
      da_candidate[i] = dc * (1.0 - g.candidate[i] * g.candidate[i]);
      da_update[i] = dz * g.update[i] * (1.0 - g.update[i]);
    }

    std::vector<double> joined(s.h_prev);
    joined.insert(joined.end(), s.gru_input.begin(), s.gru_input.end());
    std::vector<double> joined_reset(joined);
    for (std::size_t i = 0; i < h; ++i) joined_reset[i] = g.reset[i] * s.h_prev[i];

    std::vector<double> d_join;
    detail::dense_backward(w.gru.candidate, da_candidate, joined_reset, grad.gru.candidate, grad.gru.candidate_bias,
                           &d_join);
    std::vector<double> du(in_width);
    for (std::size_t i = 0; i < h; ++i) {
      const double d_rh = d_join[i];
      dh_prev[i] += d_rh * g.reset[i];
      da_reset[i] = d_rh * s.h_prev[i] * g.reset[i] * (1.0 - g.reset[i]);
    }
    for (std::size_t i = 0; i < in_width; ++i) du[i] = d_join[h + i];

    detail::dense_backward(w.gru.update, da_update, joined, grad.gru.update, grad.gru.update_bias, &d_join);
    for (std::size_t i = 0; i < h; ++i) dh_prev[i] += d_join[i];
    for (std::size_t i = 0; i < in_width; ++i) du[i] += d_join[h + i];

    detail::dense_backward(w.gru.reset, da_reset, joined, grad.gru.reset, grad.gru.reset_bias, &d_join);
    for (std::size_t i = 0; i < h; ++i) dh_prev[i] += d_join[i];
    for (std::size_t i = 0; i < in_width; ++i) du[i] += d_join[h + i];

    for (std::size_t l = w.input_layers.size(); l-- > 0;) {
      d_pre.resize(du.size());
      for (std::size_t i = 0; i < du.size(); ++i) d_pre[i] = du[i] * swish_derivative(s.input_pre[l][i]);
      detail::dense_backward(w.input_layers[l].weight, d_pre, s.input_in[l], grad.input_layers[l].weight,
                             grad.input_layers[l].bias, l > 0 ? &du : nullptr);
    }
    dh_carry = std::move(dh_prev);
  }
}

inline Gradient backward(const WeightSet& w, const Tape& tape, std::span<const std::vector<double>> output_grads) {
  Gradient grad(w.shape());
  backward(w, tape, output_grads, grad);
  if (!all_finite(grad)) throw Error(ErrorCode::NonFiniteGradient, "gradient contains NaN or Inf");
  return grad;
}

// ---------------------------------------------------------------------------
// Optimizer

inline double global_norm(const Gradient& g) {
  double ss = 0.0;
  for (const auto& t : tensors(g)) {
    for (double v : *t.values) ss += v * v;
  }
  return std::sqrt(ss);
}

inline void scale(Gradient& g, double factor) {
  for (auto& t : tensors(g)) {
    for (double& v : *t.values) v *= factor;
  }
}

inline void accumulate(Gradient& into, const Gradient& from) {
  auto dst = tensors(into);
  auto src = tensors(from);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    for (std::size_t j = 0; j < dst[i].values->size(); ++j) (*dst[i].values)[j] += (*src[i].values)[j];
  }
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 10.0;
};

struct AdamState {
  WeightSet first_moment;
  WeightSet second_moment;
  std::uint64_t steps = 0;

  AdamState() = default;
  explicit AdamState(const NetworkShape& shape) : first_moment(shape), second_moment(shape) {}
};

/// Clips the gradient to clip_norm (global L2) and applies one Adam update.
inline void adam_update(WeightSet& w, Gradient grad, AdamState& state, const AdamConfig& config) {
  if (!all_finite(grad)) throw Error(ErrorCode::NonFiniteGradient, "gradient contains NaN or Inf");
  const double norm = global_norm(grad);
  if (config.clip_norm > 0.0 && norm > config.clip_norm) scale(grad, config.clip_norm / norm);

  ++state.steps;
  const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.steps));
  const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.steps));
  auto params = tensors(w);
  auto grads = tensors(grad);
  auto m = tensors(state.first_moment);
  auto v = tensors(state.second_moment);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i].values;
    const auto& g = *grads[i].values;
    auto& mi = *m[i].values;
    auto& vi = *v[i].values;
    for (std::size_t j = 0; j < p.size(); ++j) {
      mi[j] = config.beta1 * mi[j] + (1.0 - config.beta1) * g[j];
      vi[j] = config.beta2 * vi[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = mi[j] / bias1;
      const double v_hat = vi[j] / bias2;
      p[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

}  // namespace seqsynth::nn
