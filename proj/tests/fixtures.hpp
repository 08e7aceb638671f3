#pragma once

// Small datasets shared by the test programs.

#include <cmath>
#include <string>
#include <vector>

#include "seqsynth/cpar.hpp"
#include "seqsynth/csv.hpp"
#include "seqsynth/nn.hpp"
#include "seqsynth/random.hpp"
#include "seqsynth/table.hpp"
#include "seqsynth/transforms.hpp"

namespace fixtures {

using namespace seqsynth;

/// Two sequences of three rows: one continuous, one discrete and one
/// categorical step column, one categorical context column, with missing
/// cells in the numeric columns.
inline Dataset mixed_toy() {
  Metadata m;
  m.sequence_key = "id";
  m.context_columns = {"group"};
  m.column_types = {{"group", ColumnKind::categorical},
                    {"temp", ColumnKind::continuous},
                    {"count", ColumnKind::discrete},
                    {"state", ColumnKind::categorical}};
  return validate(parse_csv("id,group,temp,count,state\n"
                            "a,x,1.5,3,on\n"
                            "a,x,,5,off\n"
                            "a,x,2.25,4,idle\n"
                            "b,y,-0.5,,on\n"
                            "b,y,0.75,0,on\n"
                            "b,y,1.0,2,off\n"),
                  m);
}

struct Framed {
  TransformState state;
  std::vector<FramedSequence> sequences;
};

inline Framed frame_all(const Dataset& ds) {
  Framed out{fit(ds), {}};
  for (const auto& s : partition_sequences(ds)) out.sequences.push_back(frame(out.state, s));
  return out;
}

/// Model with small random weights spread wide enough that the toy outputs
/// avoid the clipping floors.
inline CparModel toy_model(const Framed& f, std::size_t hidden, std::uint64_t seed,
                           MeanActivation mean = MeanActivation::identity) {
  CparConfig config;
  config.hidden = hidden;
  config.seed = seed;
  config.mean_activation = mean;
  return init_model(make_layout(f.state), f.state.context_width(), config, 3);
}

/// Central finite difference of total_loss for every weight against the
/// analytic gradient; returns the largest relative error.
inline double gradient_check(CparModel& model, const std::vector<FramedSequence>& sequences, double eps = 1e-5) {
  const auto analytic = loss_and_gradient(model, sequences).gradient;
  auto params = nn::tensors(model.weights);
  const auto grads = nn::tensors(analytic);
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].values->size(); ++j) {
      double& p = (*params[i].values)[j];
      const double saved = p;
      p = saved + eps;
      const double up = total_loss(sequences, model);
      p = saved - eps;
      const double down = total_loss(sequences, model);
      p = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = (*grads[i].values)[j];
      worst = std::max(worst, std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-6}));
    }
  }
  return worst;
}

}  // namespace fixtures
