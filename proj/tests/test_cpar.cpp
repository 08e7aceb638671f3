#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "seqsynth/cpar.hpp"

using namespace seqsynth;

namespace {

// Direct evaluation of each density, written independently of the library.
double gaussian_density(double x, double mu, double sigma) {
  return std::exp(-(x - mu) * (x - mu) / (2.0 * sigma * sigma)) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

// f(0) = (1 - rho)^r, f(k + 1) = f(k) * (k + r) / (k + 1) * rho.
std::vector<double> nb_pmf_table(double r, double rho, std::size_t upto) {
  std::vector<double> f{std::pow(1.0 - rho, r)};
  for (std::size_t k = 0; k < upto; ++k) f.push_back(f.back() * (static_cast<double>(k) + r) / (k + 1.0) * rho);
  return f;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

ParameterLayout continuous_plus_four_categories() {
  TransformState state;
  state.steps.push_back({{"x", ColumnKind::continuous}, ContinuousEncoder{}, false});
  state.steps.push_back({{"c", ColumnKind::categorical}, CategoricalEncoder{{"a", "b", "c", "d"}, std::nullopt}, false});
  return make_layout(state);
}

}  // namespace

TEST(Losses, ContinuousExamples) {
  EXPECT_NEAR(loss_continuous(3.0, true, 0.0, 1.0, 0.5), 0.6931471805599453, 1e-12);
  EXPECT_NEAR(loss_continuous(2.0, false, 2.0, 1.0, 1e-12), 0.9189385332046727, 1e-10);
  double previous = loss_continuous(1.0, false, 1.0, 0.7, 0.2);
  for (double d = 0.1; d < 5.0; d += 0.1) {
    const double l = loss_continuous(1.0 + d, false, 1.0, 0.7, 0.2);
    EXPECT_GT(l, previous);
    previous = l;
  }
}

TEST(Losses, DiscreteExamples) {
  EXPECT_NEAR(loss_discrete(0.0, false, 1.0, 0.5, 1e-12), 0.6931471805599453, 1e-10);
  EXPECT_NEAR(loss_discrete(0.0, true, 1.0, 0.5, 0.25), 1.3862943611198906, 1e-12);
  try {
    loss_discrete(-1.0, false, 1.0, 0.5, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NegativeCount);
  }
}

TEST(Losses, NegativeBinomialSumsToOne) {
  double total = 0.0;
  for (int k = 0; k < 400; ++k) total += std::exp(negative_binomial_log_pmf(k, 2.5, 0.3));
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(Losses, CategoricalExamples) {
  const double eps = 1e-9;
  std::vector<double> p{1.0 - eps, eps, eps};
  const double norm = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= norm;
  EXPECT_LT(loss_categorical(0, p), 1e-8);
  EXPECT_NEAR(loss_categorical(0, std::vector<double>{0.5, 0.5}), 0.6931471805599453, 1e-12);
  EXPECT_EQ(loss_categorical(0, std::vector<double>{0.2, 0.3, 0.5}), loss_categorical(0, std::vector<double>{0.2, 0.5, 0.3}));
  try {
    loss_categorical(3, std::vector<double>{0.5, 0.5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
  }
}

TEST(Losses, TerminationExamples) {
  EXPECT_NEAR(loss_termination(true, 0.5), 0.6931471805599453, 1e-12);
  EXPECT_LT(loss_termination(false, 1e-12), 1e-11);
  for (double tau : {0.01, 0.3, 0.77}) EXPECT_DOUBLE_EQ(loss_termination(true, tau), loss_termination(false, 1.0 - tau));
}

TEST(Losses, MatchDirectEvaluationOnRandomDraws) {
  Rng rng(123);
  for (int i = 0; i < 2000; ++i) {
    const double mu = rng.normal(0.0, 3.0), sigma = 0.01 + 3.0 * rng.uniform(), m = 0.001 + 0.998 * rng.uniform();
    const double x = rng.normal(mu, 2.0 * sigma);
    EXPECT_NEAR(loss_continuous(x, false, mu, sigma, m), -(std::log(gaussian_density(x, mu, sigma)) + std::log(1.0 - m)),
                1e-10);
    const double r = 0.05 + 8.0 * rng.uniform(), rho = 0.01 + 0.9 * rng.uniform();
    const auto k = static_cast<std::size_t>(rng.uniform_int(0, 30));
    const auto table = nb_pmf_table(r, rho, k);
    EXPECT_NEAR(loss_discrete(static_cast<double>(k), false, r, rho, m), -(std::log(table[k]) + std::log(1.0 - m)), 1e-10);
  }
}

TEST(Decode, ActivationsAndFloors) {
  const auto layout = continuous_plus_four_categories();
  // Three continuous parameters plus four categorical, then tau.
  EXPECT_EQ(layout.width(), 8u);
  EXPECT_EQ(layout.slices[0].width, 3u);
  EXPECT_EQ(layout.slices[1].width, 4u);
  EXPECT_EQ(layout.tau_slot, 7u);
  const std::vector<Activation> expected{Activation::softplus, Activation::softplus, Activation::sigmoid,
                                         Activation::softmax,  Activation::softmax,  Activation::softmax,
                                         Activation::softmax,  Activation::sigmoid};
  EXPECT_EQ(layout.activations(), expected);

  const auto d = decode_step(std::vector<double>(8, 0.0), layout);
  EXPECT_EQ(d.columns[0].missing, 0.5);
  for (double p : d.columns[1].probabilities) EXPECT_DOUBLE_EQ(p, 0.25);
  EXPECT_EQ(d.tau, 0.5);
  EXPECT_NEAR(d.columns[0].a, std::log(2.0), 1e-15);

  const auto floored = decode_step(std::vector<double>{-50, -50, 50, 40, -40, -40, -40, -60}, layout);
  EXPECT_EQ(floored.columns[0].b, 1e-3);
  EXPECT_EQ(floored.columns[0].missing, 1.0 - 1e-6);
  EXPECT_EQ(floored.tau, 1e-6);
  double total = 0.0;
  for (double p : floored.columns[1].probabilities) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
    total += p;
  }
  EXPECT_NEAR(total, 1.0, 1e-15);

  try {
    decode_step(std::vector<double>(7, 0.0), layout);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Decode, DiscreteSlotsUseSoftplusAndSigmoid) {
  TransformState state;
  state.steps.push_back({{"n", ColumnKind::discrete}, DiscreteEncoder{0, 10, 4}, false});
  const auto layout = make_layout(state);
  EXPECT_EQ(layout.slices[0].span, 10.0);
  EXPECT_DOUBLE_EQ(layout.slices[0].missing_fill, 0.4);
  const auto d = decode_step(std::vector<double>{-30.0, 0.0, 0.0, 0.0}, layout);
  EXPECT_EQ(d.columns[0].a, 1e-3);
  EXPECT_EQ(d.columns[0].b, 0.5);
}

TEST(TotalLoss, EmptySetIsZero) {
  const auto f = fixtures::frame_all(fixtures::mixed_toy());
  const auto model = fixtures::toy_model(f, 6, 1);
  EXPECT_EQ(total_loss(std::vector<FramedSequence>{}, model), 0.0);
}

TEST(TotalLoss, AdditiveOverDisjointSets) {
  const auto f = fixtures::frame_all(fixtures::mixed_toy());
  const auto model = fixtures::toy_model(f, 6, 1);
  const std::vector<FramedSequence> first{f.sequences[0]}, second{f.sequences[1]};
  EXPECT_NEAR(total_loss(f.sequences, model), total_loss(first, model) + total_loss(second, model), 1e-12);
  std::vector<FramedSequence> doubled = f.sequences;
  doubled.insert(doubled.end(), f.sequences.begin(), f.sequences.end());
  EXPECT_NEAR(total_loss(doubled, model), 2.0 * total_loss(f.sequences, model), 1e-12);
}

TEST(TotalLoss, HandSetOutputsComposeTheLossExamples) {
  // Columns: continuous (missing), discrete (missing), categorical over 2.
  TransformState state;
  state.steps.push_back({{"x", ColumnKind::continuous}, ContinuousEncoder{}, true});
  state.steps.push_back({{"n", ColumnKind::discrete}, DiscreteEncoder{0, 5, 2}, true});
  state.steps.push_back({{"c", ColumnKind::categorical}, CategoricalEncoder{{"a", "b"}, std::nullopt}, false});
  CparConfig config;
  config.hidden = 3;
  auto model = init_model(make_layout(state), 0, config, 1);
  for (auto& t : nn::tensors(model.weights)) std::fill(t.values->begin(), t.values->end(), 0.0);
  // Output = bias: m = 0.5, m = 0.25, pi = (0.5, 0.5), tau = 0.5.
  auto& bias = model.weights.output.bias;
  bias[2] = 0.0;
  bias[5] = logit(0.25);
  bias[8] = 0.0;

  FramedSequence s;
  s.steps.push_back(framing_row(state, true));
  s.steps.push_back(NumericRow{0.0, 1.0, 0.4, 1.0, 1.0, 0.0, 0.0, 0.0});
  s.steps.push_back(framing_row(state, false));

  const double expected = -std::log(0.5) + -std::log(0.25) + -std::log(0.5) + -std::log(1.0 - 0.5)  // data row
                          + -std::log(0.5);                                                          // stop row
  EXPECT_NEAR(total_loss(std::vector<FramedSequence>{s}, model), expected, 1e-12);
}

TEST(Gradient, MatchesFiniteDifferencesOnMixedToy) {
  const auto f = fixtures::frame_all(fixtures::mixed_toy());
  for (auto mean : {MeanActivation::identity, MeanActivation::softplus}) {
    auto model = fixtures::toy_model(f, 6, 5, mean);
    EXPECT_LT(fixtures::gradient_check(model, f.sequences), 1e-4);
  }
}

TEST(Train, DeterministicLossTrace) {
  const auto f = fixtures::frame_all(fixtures::mixed_toy());
  auto a = fixtures::toy_model(f, 8, 3);
  auto b = fixtures::toy_model(f, 8, 3);
  for (int e = 0; e < 10; ++e) EXPECT_EQ(train_epoch(a, f.sequences), train_epoch(b, f.sequences));
  EXPECT_EQ(a.epochs_trained, 10u);
}

TEST(Train, MinibatchesAreDeterministicToo) {
  const auto f = fixtures::frame_all(fixtures::mixed_toy());
  auto a = fixtures::toy_model(f, 8, 3);
  auto b = fixtures::toy_model(f, 8, 3);
  a.batches_per_epoch = b.batches_per_epoch = 2;
  for (int e = 0; e < 5; ++e) EXPECT_EQ(train_epoch(a, f.sequences), train_epoch(b, f.sequences));
}

TEST(Train, ConstantSequenceApproachesItsFloor) {
  // 20 copies of one constant sequence of four rows with a single discrete
  // column. The discrete span is 0, so every target is the count 0.
  Metadata m;
  m.sequence_key = "id";
  m.column_types = {{"v", ColumnKind::discrete}};
  const auto ds = validate(parse_csv("id,v\na,7\na,7\na,7\na,7\n"), m);
  const auto f = fixtures::frame_all(ds);
  const std::vector<FramedSequence> copies(20, f.sequences[0]);
  CparConfig config;
  config.seed = 4;
  auto model = init_model(make_layout(f.state), 0, config, 4);

  // Floor: every parameter at its best clipped value. Data rows pay the NB
  // probability of 0 at r = r_floor, rho = p, plus -log(1 - m) and
  // -log(1 - tau) at m = tau = p; the stop row pays -log(1 - p).
  const double p = config.floors.probability;
  const double data_row = -config.floors.r * std::log(1.0 - p) - 2.0 * std::log(1.0 - p);
  const double floor = 20.0 * (4.0 * data_row - std::log(1.0 - p));

  const double initial = total_loss(copies, model);
  double loss = initial;
  for (int e = 0; e < 200; ++e) loss = train_epoch(model, copies);
  loss = total_loss(copies, model);
  EXPECT_LE(loss - floor, 0.05 * (initial - floor)) << "initial " << initial << " final " << loss << " floor " << floor;
}

TEST(Sample, DeterministicPerSeed) {
  const auto f = fixtures::frame_all(fixtures::mixed_toy());
  const auto model = fixtures::toy_model(f, 8, 2);
  const auto a = sample_sequence(model, f.sequences[0].context, 77);
  const auto b = sample_sequence(model, f.sequences[0].context, 77);
  EXPECT_EQ(a.framed.steps, b.framed.steps);
  const auto c = sample_sequence(model, f.sequences[1].context, 77);
  // Conditioning reaches the network: the first outputs differ between contexts.
  std::vector<double> h1(8, 0.0), h2(8, 0.0);
  auto x1 = model.start_row();
  auto x2 = model.start_row();
  x1.insert(x1.end(), f.sequences[0].context.begin(), f.sequences[0].context.end());
  x2.insert(x2.end(), f.sequences[1].context.begin(), f.sequences[1].context.end());
  EXPECT_NE(nn::step(model.weights, h1, x1), nn::step(model.weights, h2, x2));
  EXPECT_GE(c.framed.steps.size(), 3u);
}

TEST(Sample, FramingAndTermination) {
  const auto f = fixtures::frame_all(fixtures::mixed_toy());
  auto model = fixtures::toy_model(f, 8, 2);
  model.max_sequence_length = 12;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = sample_sequence(model, f.sequences[0].context, seed);
    const auto& steps = s.framed.steps;
    ASSERT_GE(steps.size(), 3u);
    ASSERT_LE(steps.size(), 14u);
    EXPECT_EQ(steps.front()[model.layout.start_slot()], 1.0);
    EXPECT_EQ(steps.back()[model.layout.stop_slot()], 1.0);
    if (!s.terminated_by_tau) EXPECT_EQ(steps.size(), 14u);
    // Sampled rows decode under the fitted transforms.
    EXPECT_NO_THROW(unframe(f.state, s.framed));
  }
}

TEST(Sample, RiggedTauEndsAfterOneRow) {
  const auto f = fixtures::frame_all(fixtures::mixed_toy());
  auto model = fixtures::toy_model(f, 8, 2);
  std::fill(model.weights.output.weight.values.begin(), model.weights.output.weight.values.end(), 0.0);
  model.weights.output.bias[model.layout.tau_slot] = 30.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = sample_sequence(model, f.sequences[1].context, seed);
    EXPECT_EQ(s.framed.steps.size(), 3u);
    EXPECT_TRUE(s.terminated_by_tau);
  }
}

TEST(Sample, CategoricalFrequenciesMatchFrozenDistribution) {
  const auto layout = continuous_plus_four_categories();
  StepDistribution dist;
  dist.columns.push_back({ParameterGroup::continuous, 0.0, 1.0, 0.1, {}});
  dist.columns.push_back({ParameterGroup::categorical, 0, 0, 0, {0.1, 0.2, 0.3, 0.4}});
  Rng rng(31);
  std::vector<double> counts(4, 0.0);
  double missing = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto row = sample_row(dist, layout, rng);
    missing += row[1];
    for (std::size_t k = 0; k < 4; ++k) counts[k] += row[layout.slices[1].input_offset + k];
  }
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(counts[k] / draws, dist.columns[1].probabilities[k], 0.02);
  EXPECT_NEAR(missing / draws, 0.1, 0.02);
}

TEST(Sample, DiscreteDrawsFollowNegativeBinomialMean) {
  TransformState state;
  state.steps.push_back({{"n", ColumnKind::discrete}, DiscreteEncoder{0, 1000, 4}, false});
  const auto layout = make_layout(state);
  StepDistribution dist;
  dist.columns.push_back({ParameterGroup::discrete, 2.5, 0.3, 0.0, {}});
  Rng rng(9);
  double total = 0.0;
  const int draws = 50000;
  for (int i = 0; i < draws; ++i) total += sample_row(dist, layout, rng)[0] * 1000.0;
  // Mean of the NB with success probability rho per trial: r rho / (1 - rho).
  EXPECT_NEAR(total / draws, 2.5 * 0.3 / 0.7, 0.03);
}

TEST(Persistence, JsonRoundTripKeepsWeightsAndSamples) {
  const auto f = fixtures::frame_all(fixtures::mixed_toy());
  auto model = fixtures::toy_model(f, 5, 8);
  train_epoch(model, f.sequences);
  const auto back = cpar_model_from_json(to_json(model));
  const auto a = nn::tensors(model.weights);
  const auto b = nn::tensors(back.weights);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].values, *b[i].values);
  EXPECT_EQ(sample_sequence(model, f.sequences[0].context, 3).framed.steps,
            sample_sequence(back, f.sequences[0].context, 3).framed.steps);
}
