#pragma once

// Umbrella header for the temporal alignment connector library.

#include "tac/attention.hpp"
#include "tac/checkpoint.hpp"
#include "tac/config.hpp"
#include "tac/connector.hpp"
#include "tac/errors.hpp"
#include "tac/gradcheck.hpp"
#include "tac/heatmap.hpp"
#include "tac/lfe.hpp"
#include "tac/metrics.hpp"
#include "tac/ops.hpp"
#include "tac/param.hpp"
#include "tac/prompt.hpp"
#include "tac/rng.hpp"
#include "tac/synth.hpp"
#include "tac/tensor.hpp"
#include "tac/tfm.hpp"
#include "tac/train.hpp"
