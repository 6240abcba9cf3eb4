#pragma once

// Umbrella header.

#include "gduq/core/adam.hpp"
#include "gduq/core/autodiff.hpp"
#include "gduq/core/checkpoint.hpp"
#include "gduq/core/errors.hpp"
#include "gduq/core/gradcheck.hpp"
#include "gduq/core/log.hpp"
#include "gduq/core/parameter.hpp"
#include "gduq/core/rng.hpp"
#include "gduq/core/tensor.hpp"
#include "gduq/graph/graph.hpp"
#include "gduq/graph/io.hpp"
#include "gduq/graph/motif.hpp"
#include "gduq/graph/shift.hpp"
#include "gduq/graph/split.hpp"
#include "gduq/nn/layers.hpp"
#include "gduq/nn/model.hpp"
#include "gduq/nn/train.hpp"
#include "gduq/anchor/summary.hpp"
#include "gduq/anchor/anchoring.hpp"
#include "gduq/uq/temperature.hpp"
#include "gduq/uq/mcd.hpp"
#include "gduq/uq/ensemble.hpp"
#include "gduq/metrics/records.hpp"
#include "gduq/metrics/metrics.hpp"
#include "gduq/harness/config.hpp"
#include "gduq/harness/report.hpp"
#include "gduq/harness/experiment.hpp"
