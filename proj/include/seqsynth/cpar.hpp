#pragma once

// Conditional probabilistic auto-regressive model.
//
// The network reads S_0 .. S_L (each concatenated with the context vector)
// and output t parameterizes S_{t+1}: one distribution per step column plus
// the termination probability tau. Data rows are supervised with tau = 0 and
// the stop row with tau = 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>
#include <nlohmann/json.hpp>

#include "seqsynth/encoding.hpp"
#include "seqsynth/error.hpp"
#include "seqsynth/nn.hpp"
#include "seqsynth/random.hpp"
#include "seqsynth/transforms.hpp"

namespace seqsynth {

enum class Activation { softplus, sigmoid, softmax, identity };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::softplus: return "softplus";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
    case Activation::identity: return "identity";
  }
  return "?";
}

enum class ParameterGroup { continuous, discrete, categorical };

/// Activation applied to the mean of continuous columns.
enum class MeanActivation { softplus, identity };

inline MeanActivation parse_mean_activation(std::string_view s) {
  if (s == "softplus") return MeanActivation::softplus;
  if (s == "identity") return MeanActivation::identity;
  throw Error(ErrorCode::InvalidConfig, "unknown mean activation '" + std::string(s) + "'");
}

inline std::string_view to_string(MeanActivation a) {
  return a == MeanActivation::softplus ? "softplus" : "identity";
}

struct ParameterSlice {
  ParameterGroup group = ParameterGroup::continuous;
  std::size_t column = 0;         // position among the step columns
  std::size_t input_offset = 0;   // fragment offset within a NumericRow
  std::size_t output_offset = 0;  // first slot in the network output
  std::size_t width = 3;
  double span = 0.0;              // discrete: max - min of the raw values
  double missing_fill = 0.0;      // encoded value fed back for a missing cell
};

struct ParameterLayout {
  std::vector<ParameterSlice> slices;
  std::size_t tau_slot = 0;
  std::size_t row_width = 0;  // width of the encoded step rows

  std::size_t width() const { return tau_slot + 1; }
  std::size_t start_slot() const { return row_width - 2; }
  std::size_t stop_slot() const { return row_width - 1; }

  /// Final-layer activation of every output slot.
  std::vector<Activation> activations(MeanActivation mean = MeanActivation::softplus) const {
    std::vector<Activation> out(width(), Activation::sigmoid);
    for (const auto& s : slices) {
      if (s.group == ParameterGroup::categorical) {
        std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(s.output_offset), s.width, Activation::softmax);
      } else {
        const bool continuous = s.group == ParameterGroup::continuous;
        out[s.output_offset] =
            continuous && mean == MeanActivation::identity ? Activation::identity : Activation::softplus;
        out[s.output_offset + 1] = continuous ? Activation::softplus : Activation::sigmoid;
        out[s.output_offset + 2] = Activation::sigmoid;
      }
    }
    return out;
  }
};

inline ParameterLayout make_layout(const TransformState& state) {
  ParameterLayout layout;
  const auto offsets = state.step_offsets();
  std::size_t out = 0;
  for (std::size_t c = 0; c < state.steps.size(); ++c) {
    const auto& column = state.steps[c];
    ParameterSlice slice;
    slice.column = c;
    slice.input_offset = offsets[c];
    slice.output_offset = out;
    if (const auto* cat = std::get_if<CategoricalEncoder>(&column.encoder)) {
      slice.group = ParameterGroup::categorical;
      slice.width = cat->categories.size();
    } else if (const auto* disc = std::get_if<DiscreteEncoder>(&column.encoder)) {
      slice.group = ParameterGroup::discrete;
      slice.span = disc->span();
      slice.missing_fill = disc->span() > 0.0 ? (disc->impute - disc->min) / disc->span() : 0.0;
    }
    out += slice.width;
    layout.slices.push_back(slice);
  }
  layout.tau_slot = out;
  layout.row_width = state.row_width();
  return layout;
}

struct DistributionFloors {
  double sigma = 1e-3;
  double r = 1e-3;
  double probability = 1e-6;  // m, rho, tau and categorical entries live in [p, 1 - p]
};

// ---------------------------------------------------------------------------
// Losses

inline double negative_binomial_log_pmf(double k, double r, double rho) {
  return std::lgamma(k + r) - std::lgamma(r) - std::lgamma(k + 1.0) + r * std::log1p(-rho) + k * std::log(rho);
}

inline double loss_continuous(double x, bool is_missing, double mu, double sigma, double m) {
  if (is_missing) return -std::log(m);
  const double z = (x - mu) / sigma;
  return 0.5 * std::log(2.0 * std::numbers::pi) + std::log(sigma) + 0.5 * z * z - std::log1p(-m);
}

inline double loss_discrete(double count, bool is_missing, double r, double rho, double m) {
  if (is_missing) return -std::log(m);
  if (count < 0.0 || count != std::floor(count)) {
    throw Error(ErrorCode::NegativeCount, "discrete count must be a non-negative integer, got " + format_double(count));
  }
  return -negative_binomial_log_pmf(count, r, rho) - std::log1p(-m);
}

inline double loss_categorical(std::size_t true_index, std::span<const double> probabilities) {
  if (true_index >= probabilities.size()) {
    throw Error(ErrorCode::IndexOutOfRange, "category " + std::to_string(true_index) + " of " +
                                                std::to_string(probabilities.size()));
  }
  return -std::log(probabilities[true_index]);
}

inline double loss_termination(bool is_terminal, double tau) {
  return is_terminal ? -std::log(tau) : -std::log1p(-tau);
}

// ---------------------------------------------------------------------------
// Decoding network outputs

struct ColumnDistribution {
  ParameterGroup group = ParameterGroup::continuous;
  double a = 0.0;  // mu (continuous) or r (discrete)
  double b = 0.0;  // sigma (continuous) or rho (discrete)
  double missing = 0.0;
  std::vector<double> probabilities;  // categorical only
};

struct StepDistribution {
  std::vector<ColumnDistribution> columns;
  double tau = 0.5;
};

namespace detail {

// A floored/clipped activation together with its derivative.
struct Activated {
  double value;
  double slope;
};

inline Activated softplus_floor(double raw, double floor) {
  const double v = nn::softplus(raw);
  if (v < floor) return {floor, 0.0};
  return {v, nn::sigmoid(raw)};
}

inline Activated sigmoid_clip(double raw, double p) {
  const double v = nn::sigmoid(raw);
  if (v < p) return {p, 0.0};
  if (v > 1.0 - p) return {1.0 - p, 0.0};
  return {v, v * (1.0 - v)};
}

inline Activated mean_activation(double raw, MeanActivation kind) {
  if (kind == MeanActivation::identity) return {raw, 1.0};
  return {nn::softplus(raw), nn::sigmoid(raw)};
}

// Softmax, clipped to [p, 1 - p] and renormalized. raw_softmax receives the
// unclipped probabilities.
inline std::vector<double> clipped_softmax(std::span<const double> logits, double p, std::vector<double>* raw_softmax) {
  auto probs = nn::softmax(logits);
  if (raw_softmax) *raw_softmax = probs;
  double total = 0.0;
  for (double& v : probs) total += (v = std::clamp(v, p, 1.0 - p));
  for (double& v : probs) v /= total;
  return probs;
}

}  // namespace detail

inline StepDistribution decode_step(std::span<const double> raw, const ParameterLayout& layout,
                                    const DistributionFloors& floors = {},
                                    MeanActivation mean = MeanActivation::softplus) {
  if (raw.size() != layout.width()) {
    throw Error(ErrorCode::ShapeMismatch, "decode_step: output has " + std::to_string(raw.size()) +
                                              " slots, layout expects " + std::to_string(layout.width()));
  }
  StepDistribution dist;
  for (const auto& s : layout.slices) {
    ColumnDistribution c;
    c.group = s.group;
    const auto o = s.output_offset;
    switch (s.group) {
      case ParameterGroup::continuous:
        c.a = detail::mean_activation(raw[o], mean).value;
        c.b = detail::softplus_floor(raw[o + 1], floors.sigma).value;
        c.missing = detail::sigmoid_clip(raw[o + 2], floors.probability).value;
        break;
      case ParameterGroup::discrete:
        c.a = detail::softplus_floor(raw[o], floors.r).value;
        c.b = detail::sigmoid_clip(raw[o + 1], floors.probability).value;
        c.missing = detail::sigmoid_clip(raw[o + 2], floors.probability).value;
        break;
      case ParameterGroup::categorical:
        c.probabilities = detail::clipped_softmax(raw.subspan(o, s.width), floors.probability, nullptr);
        break;
    }
    dist.columns.push_back(std::move(c));
  }
  dist.tau = detail::sigmoid_clip(raw[layout.tau_slot], floors.probability).value;
  return dist;
}

/// Integer offset modeled by the negative binomial for a normalized discrete value.
inline double discrete_count(double normalized, double span) {
  return span > 0.0 ? std::round(normalized * span) : 0.0;
}

/// Loss of one network output against its target row, and dLoss/dRaw added
/// into grad (if given). target is a data row or the stop row.
inline double step_loss(std::span<const double> raw, std::span<const double> target, const ParameterLayout& layout,
                        const DistributionFloors& floors, MeanActivation mean, std::span<double> grad = {}) {
  if (raw.size() != layout.width() || target.size() != layout.row_width) {
    throw Error(ErrorCode::ShapeMismatch, "step_loss: output or target has the wrong width");
  }
  const bool want_grad = !grad.empty();
  const bool terminal = target[layout.stop_slot()] >= 0.5;
  double loss = 0.0;

  if (!terminal) {
    for (const auto& s : layout.slices) {
      const auto o = s.output_offset;
      const auto in = s.input_offset;
      if (s.group == ParameterGroup::categorical) {
        const auto truth = static_cast<std::size_t>(
            std::max_element(target.begin() + static_cast<std::ptrdiff_t>(in),
                             target.begin() + static_cast<std::ptrdiff_t>(in + s.width)) -
            (target.begin() + static_cast<std::ptrdiff_t>(in)));
        std::vector<double> soft;
        const auto probs = detail::clipped_softmax(raw.subspan(o, s.width), floors.probability, &soft);
        loss += loss_categorical(truth, probs);
        if (want_grad) {
          // L = -log c_y + log sum(c), c = clip(softmax(a)).
          double clipped_total = 0.0;
          for (double v : soft) clipped_total += std::clamp(v, floors.probability, 1.0 - floors.probability);
          std::vector<double> g(s.width, 0.0);
          double weighted = 0.0;
          for (std::size_t j = 0; j < s.width; ++j) {
            const bool inside = soft[j] >= floors.probability && soft[j] <= 1.0 - floors.probability;
            if (inside) {
              g[j] = 1.0 / clipped_total - (j == truth ? 1.0 / soft[j] : 0.0);
            }
            weighted += g[j] * soft[j];
          }
          for (std::size_t k = 0; k < s.width; ++k) grad[o + k] += soft[k] * (g[k] - weighted);
        }
        continue;
      }

      const bool missing = target[in + 1] >= 0.5;
      const auto m = detail::sigmoid_clip(raw[o + 2], floors.probability);
      if (missing) {
        loss += -std::log(m.value);
        if (want_grad) grad[o + 2] += -1.0 / m.value * m.slope;
        continue;
      }
      if (want_grad) grad[o + 2] += 1.0 / (1.0 - m.value) * m.slope;

      if (s.group == ParameterGroup::continuous) {
        const auto mu = detail::mean_activation(raw[o], mean);
        const auto sigma = detail::softplus_floor(raw[o + 1], floors.sigma);
        const double x = target[in];
        loss += loss_continuous(x, false, mu.value, sigma.value, m.value);
        if (want_grad) {
          const double diff = x - mu.value;
          const double s2 = sigma.value * sigma.value;
          grad[o] += -diff / s2 * mu.slope;
          grad[o + 1] += (1.0 / sigma.value - diff * diff / (s2 * sigma.value)) * sigma.slope;
        }
      } else {
        const auto r = detail::softplus_floor(raw[o], floors.r);
        const auto rho = detail::sigmoid_clip(raw[o + 1], floors.probability);
        const double k = discrete_count(target[in], s.span);
        loss += loss_discrete(k, false, r.value, rho.value, m.value);
        if (want_grad) {
          using boost::math::digamma;
          grad[o] += -(digamma(k + r.value) - digamma(r.value) + std::log1p(-rho.value)) * r.slope;
          grad[o + 1] += (r.value / (1.0 - rho.value) - k / rho.value) * rho.slope;
        }
      }
    }
  }

  const auto tau = detail::sigmoid_clip(raw[layout.tau_slot], floors.probability);
  loss += loss_termination(terminal, tau.value);
  if (want_grad) {
    grad[layout.tau_slot] += (terminal ? -1.0 / tau.value : 1.0 / (1.0 - tau.value)) * tau.slope;
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Model

struct CparConfig {
  std::size_t epochs = 128;
  std::size_t hidden = 64;
  std::size_t input_layers = 1;
  std::size_t hidden_layers = 1;
  double learning_rate = 1e-3;
  double clip_norm = 10.0;
  /// Optimizer updates per epoch; the sequences are split into this many
  /// shuffled batches. 1 means one update on the summed loss.
  std::size_t batches_per_epoch = 1;
  /// 0 means four times the longest training sequence.
  std::size_t max_sequence_length = 0;
  DistributionFloors floors;
  MeanActivation mean_activation = MeanActivation::softplus;
  std::uint64_t seed = 0;
};

struct CparModel {
  nn::WeightSet weights;
  ParameterLayout layout;
  std::size_t context_width = 0;
  std::size_t epochs_trained = 0;
  std::uint64_t seed = 0;
  std::size_t max_sequence_length = 0;
  DistributionFloors floors;
  MeanActivation mean_activation = MeanActivation::softplus;
  double learning_rate = 1e-3;
  double clip_norm = 10.0;
  std::size_t batches_per_epoch = 1;
  nn::AdamState optimizer;

  std::size_t input_width() const { return context_width + layout.row_width; }

  /// Start marker row: neutral fragments with the start slot set.
  NumericRow start_row() const { return framing_row(true); }
  NumericRow stop_row() const { return framing_row(false); }

 private:
  NumericRow framing_row(bool start) const {
    NumericRow row(layout.row_width, 0.0);
    for (const auto& s : layout.slices) {
      if (s.group == ParameterGroup::categorical) row[s.input_offset] = 1.0;
    }
    row[start ? layout.start_slot() : layout.stop_slot()] = 1.0;
    return row;
  }
};

inline CparModel init_model(const ParameterLayout& layout, std::size_t context_width, const CparConfig& config,
                            std::size_t longest_sequence = 0) {
  if (config.hidden == 0 || config.batches_per_epoch == 0) {
    throw Error(ErrorCode::InvalidConfig, "hidden size and batches per epoch must be positive");
  }
  CparModel model;
  model.layout = layout;
  model.context_width = context_width;
  model.seed = config.seed;
  model.max_sequence_length =
      config.max_sequence_length > 0 ? config.max_sequence_length : std::max<std::size_t>(4 * longest_sequence, 1);
  model.floors = config.floors;
  model.mean_activation = config.mean_activation;
  model.learning_rate = config.learning_rate;
  model.clip_norm = config.clip_norm;
  model.batches_per_epoch = config.batches_per_epoch;
  const nn::NetworkShape shape{model.input_width(), config.hidden, layout.width(), config.input_layers,
                               config.hidden_layers};
  model.weights = nn::WeightSet(shape);
  Rng rng(derive_seed(config.seed, "init"));
  nn::initialize(model.weights, rng);
  model.optimizer = nn::AdamState(shape);
  return model;
}

namespace detail {

inline std::vector<std::vector<double>> network_inputs(const CparModel& model, const FramedSequence& framed) {
  if (framed.steps.size() < 2) {
    throw Error(ErrorCode::MissingFraming, "sequence '" + framed.key + "' lacks start/stop rows");
  }
  if (framed.context.size() != model.context_width) {
    throw Error(ErrorCode::ShapeMismatch, "sequence '" + framed.key + "' has a context of width " +
                                              std::to_string(framed.context.size()) + ", model expects " +
                                              std::to_string(model.context_width));
  }
  std::vector<std::vector<double>> inputs;
  inputs.reserve(framed.steps.size() - 1);
  for (std::size_t t = 0; t + 1 < framed.steps.size(); ++t) {
    if (framed.steps[t].size() != model.layout.row_width) {
      throw Error(ErrorCode::ShapeMismatch, "sequence '" + framed.key + "' has a row of the wrong width");
    }
    std::vector<double> x(framed.steps[t]);
    x.insert(x.end(), framed.context.begin(), framed.context.end());
    inputs.push_back(std::move(x));
  }
  return inputs;
}

inline double sequence_loss(const CparModel& model, const FramedSequence& framed, nn::Gradient* grad) {
  const auto inputs = network_inputs(model, framed);
  const auto tape = nn::forward(model.weights, inputs);
  double loss = 0.0;
  std::vector<std::vector<double>> output_grads;
  if (grad) output_grads.assign(tape.steps.size(), std::vector<double>(model.layout.width(), 0.0));
  for (std::size_t t = 0; t < tape.steps.size(); ++t) {
    std::span<double> g = grad ? std::span<double>(output_grads[t]) : std::span<double>();
    loss += step_loss(tape.steps[t].output, framed.steps[t + 1], model.layout, model.floors, model.mean_activation, g);
  }
  if (grad) nn::backward(model.weights, tape, output_grads, *grad);
  return loss;
}

}  // namespace detail

/// Summed loss over all sequences, every step, every column plus tau.
inline double total_loss(std::span<const FramedSequence> sequences, const CparModel& model) {
  double loss = 0.0;
  for (const auto& s : sequences) loss += detail::sequence_loss(model, s, nullptr);
  return loss;
}

struct LossAndGradient {
  double loss = 0.0;
  nn::Gradient gradient;
};

inline LossAndGradient loss_and_gradient(const CparModel& model, std::span<const FramedSequence> sequences) {
  LossAndGradient out{0.0, nn::Gradient(model.weights.shape())};
  for (const auto& s : sequences) out.loss += detail::sequence_loss(model, s, &out.gradient);
  if (!std::isfinite(out.loss)) throw Error(ErrorCode::NonFiniteLoss, "training loss is not finite");
  if (!nn::all_finite(out.gradient)) throw Error(ErrorCode::NonFiniteGradient, "gradient contains NaN or Inf");
  return out;
}

/// One training epoch with teacher forcing. Returns the summed loss of the
/// epoch, evaluated before each batch's update.
inline double train_epoch(CparModel& model, std::span<const FramedSequence> sequences) {
  if (sequences.empty()) throw Error(ErrorCode::InvalidConfig, "training needs at least one sequence");
  const nn::AdamConfig adam{model.learning_rate, 0.9, 0.999, 1e-8, model.clip_norm};
  const std::size_t batches = std::min(model.batches_per_epoch, sequences.size());

  double epoch_loss = 0.0;
  if (batches <= 1) {
    auto lg = loss_and_gradient(model, sequences);
    nn::adam_update(model.weights, std::move(lg.gradient), model.optimizer, adam);
    epoch_loss = lg.loss;
  } else {
    std::vector<std::size_t> order(sequences.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(derive_seed(model.seed, "training"), model.epochs_trained));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(0, i - 1)]);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * order.size() / batches;
      const std::size_t hi = (b + 1) * order.size() / batches;
      std::vector<FramedSequence> batch;
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(sequences[order[i]]);
      auto lg = loss_and_gradient(model, batch);
      nn::adam_update(model.weights, std::move(lg.gradient), model.optimizer, adam);
      epoch_loss += lg.loss;
    }
  }
  ++model.epochs_trained;
  return epoch_loss;
}

// ---------------------------------------------------------------------------
// Sampling

/// Draws one encoded row from a step distribution (markers cleared).
inline NumericRow sample_row(const StepDistribution& dist, const ParameterLayout& layout, Rng& rng) {
  NumericRow row(layout.row_width, 0.0);
  for (std::size_t c = 0; c < layout.slices.size(); ++c) {
    const auto& s = layout.slices[c];
    const auto& d = dist.columns[c];
    if (s.group == ParameterGroup::categorical) {
      row[s.input_offset + rng.categorical(d.probabilities)] = 1.0;
      continue;
    }
    if (rng.bernoulli(d.missing)) {
      row[s.input_offset] = s.missing_fill;
      row[s.input_offset + 1] = 1.0;
      continue;
    }
    if (s.group == ParameterGroup::continuous) {
      row[s.input_offset] = rng.normal(d.a, d.b);
    } else {
      const double k = std::min(static_cast<double>(rng.negative_binomial(d.a, d.b)), s.span);
      row[s.input_offset] = s.span > 0.0 ? k / s.span : 0.0;
    }
  }
  return row;
}

struct SampledSequence {
  FramedSequence framed;
  /// False when the length cap ended the sequence.
  bool terminated_by_tau = true;
};

/// Autoregressive sampling for one context. The result holds the start row,
/// the generated rows and a stop row.
inline SampledSequence sample_sequence(const CparModel& model, std::span<const double> context, std::uint64_t seed) {
  if (context.size() != model.context_width) {
    throw Error(ErrorCode::ShapeMismatch, "context has width " + std::to_string(context.size()) + ", model expects " +
                                              std::to_string(model.context_width));
  }
  Rng rng(seed);
  SampledSequence out;
  auto& steps = out.framed.steps;
  out.framed.context.assign(context.begin(), context.end());
  steps.push_back(model.start_row());

  std::vector<double> hidden(model.weights.gru.hidden(), 0.0);
  std::vector<double> input;
  while (true) {
    input = steps.back();
    input.insert(input.end(), context.begin(), context.end());
    const auto raw = nn::step(model.weights, hidden, input);
    const auto dist = decode_step(raw, model.layout, model.floors, model.mean_activation);
    const std::size_t generated = steps.size() - 1;
    if (generated >= 1 && dist.tau > 0.5) break;
    if (generated >= model.max_sequence_length) {
      out.terminated_by_tau = false;
      break;
    }
    steps.push_back(sample_row(dist, model.layout, rng));
  }
  steps.push_back(model.stop_row());
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::json to_json(const ParameterLayout& layout) {
  nlohmann::json slices = nlohmann::json::array();
  for (const auto& s : layout.slices) {
    const char* group = s.group == ParameterGroup::continuous ? "continuous"
                        : s.group == ParameterGroup::discrete ? "discrete"
                                                              : "categorical";
    slices.push_back({{"group", group},
                      {"column", s.column},
                      {"input_offset", s.input_offset},
                      {"output_offset", s.output_offset},
                      {"width", s.width},
                      {"span", s.span},
                      {"missing_fill", s.missing_fill}});
  }
  return {{"slices", slices}, {"tau_slot", layout.tau_slot}, {"row_width", layout.row_width}};
}

inline ParameterLayout parameter_layout_from_json(const nlohmann::json& j) {
  ParameterLayout layout;
  for (const auto& s : j.at("slices")) {
    ParameterSlice slice;
    const auto group = s.at("group").get<std::string>();
    if (group == "continuous") {
      slice.group = ParameterGroup::continuous;
    } else if (group == "discrete") {
      slice.group = ParameterGroup::discrete;
    } else if (group == "categorical") {
      slice.group = ParameterGroup::categorical;
    } else {
      throw Error(ErrorCode::ParseError, "unknown parameter group '" + group + "'");
    }
    slice.column = s.at("column").get<std::size_t>();
    slice.input_offset = s.at("input_offset").get<std::size_t>();
    slice.output_offset = s.at("output_offset").get<std::size_t>();
    slice.width = s.at("width").get<std::size_t>();
    slice.span = s.at("span").get<double>();
    slice.missing_fill = s.at("missing_fill").get<double>();
    layout.slices.push_back(slice);
  }
  layout.tau_slot = j.at("tau_slot").get<std::size_t>();
  layout.row_width = j.at("row_width").get<std::size_t>();
  return layout;
}

inline nlohmann::json weights_to_json(const nn::WeightSet& w) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : nn::tensors(w)) {
    out.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}, {"data", encode_doubles(*t.values)}});
  }
  return out;
}

inline void weights_from_json(const nlohmann::json& j, nn::WeightSet& w) {
  auto refs = nn::tensors(w);
  if (j.size() != refs.size()) throw Error(ErrorCode::ShapeMismatch, "weight tensor count does not match the network");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& t = j[i];
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (t.at("name").get<std::string>() != refs[i].name || shape.size() != 2 || shape[0] != refs[i].rows ||
        shape[1] != refs[i].cols) {
      throw Error(ErrorCode::ShapeMismatch, "weight tensor '" + refs[i].name + "' does not match the network");
    }
    auto values = decode_doubles(t.at("data").get<std::string>());
    if (values.size() != refs[i].values->size()) {
      throw Error(ErrorCode::ShapeMismatch, "weight tensor '" + refs[i].name + "' has the wrong element count");
    }
    *refs[i].values = std::move(values);
  }
}

inline nlohmann::json to_json(const CparModel& model) {
  const auto shape = model.weights.shape();
  return {{"layout", to_json(model.layout)},
          {"context_width", model.context_width},
          {"epochs_trained", model.epochs_trained},
          {"seed", model.seed},
          {"max_sequence_length", model.max_sequence_length},
          {"floors", {{"sigma", model.floors.sigma}, {"r", model.floors.r}, {"probability", model.floors.probability}}},
          {"mean_activation", std::string(to_string(model.mean_activation))},
          {"learning_rate", model.learning_rate},
          {"clip_norm", model.clip_norm},
          {"batches_per_epoch", model.batches_per_epoch},
          {"network",
           {{"input_width", shape.input_width},
            {"hidden", shape.hidden},
            {"output_width", shape.output_width},
            {"input_layers", shape.input_layers},
            {"hidden_layers", shape.hidden_layers}}},
          {"weights", weights_to_json(model.weights)}};
}

inline CparModel cpar_model_from_json(const nlohmann::json& j) {
  CparModel model;
  model.layout = parameter_layout_from_json(j.at("layout"));
  model.context_width = j.at("context_width").get<std::size_t>();
  model.epochs_trained = j.at("epochs_trained").get<std::size_t>();
  model.seed = j.at("seed").get<std::uint64_t>();
  model.max_sequence_length = j.at("max_sequence_length").get<std::size_t>();
  const auto& floors = j.at("floors");
  model.floors = {floors.at("sigma").get<double>(), floors.at("r").get<double>(), floors.at("probability").get<double>()};
  model.mean_activation = parse_mean_activation(j.at("mean_activation").get<std::string>());
  model.learning_rate = j.at("learning_rate").get<double>();
  model.clip_norm = j.at("clip_norm").get<double>();
  model.batches_per_epoch = j.at("batches_per_epoch").get<std::size_t>();
  const auto& n = j.at("network");
  const nn::NetworkShape shape{n.at("input_width").get<std::size_t>(), n.at("hidden").get<std::size_t>(),
                               n.at("output_width").get<std::size_t>(), n.at("input_layers").get<std::size_t>(),
                               n.at("hidden_layers").get<std::size_t>()};
  if (shape.input_width != model.input_width() || shape.output_width != model.layout.width()) {
    throw Error(ErrorCode::ShapeMismatch, "network shape does not match the parameter layout");
  }
  model.weights = nn::WeightSet(shape);
  weights_from_json(j.at("weights"), model.weights);
  model.optimizer = nn::AdamState(shape);
  return model;
}

}  // namespace seqsynth
