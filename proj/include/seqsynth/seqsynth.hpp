#pragma once

#include "seqsynth/copula.hpp"
#include "seqsynth/cpar.hpp"
#include "seqsynth/csv.hpp"
#include "seqsynth/encoding.hpp"
#include "seqsynth/error.hpp"
#include "seqsynth/experiment.hpp"
#include "seqsynth/msas.hpp"
#include "seqsynth/nn.hpp"
#include "seqsynth/pipeline.hpp"
#include "seqsynth/random.hpp"
#include "seqsynth/table.hpp"
#include "seqsynth/transforms.hpp"
