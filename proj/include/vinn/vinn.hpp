#pragma once

#include "vinn/benchmarks.hpp"
#include "vinn/checkpoint.hpp"
#include "vinn/config.hpp"
#include "vinn/divergences.hpp"
#include "vinn/errors.hpp"
#include "vinn/experiments.hpp"
#include "vinn/flows.hpp"
#include "vinn/grad_check.hpp"
#include "vinn/metrics.hpp"
#include "vinn/nn.hpp"
#include "vinn/ops.hpp"
#include "vinn/random.hpp"
#include "vinn/results.hpp"
#include "vinn/rkhs_critic.hpp"
#include "vinn/selfcheck.hpp"
#include "vinn/tensor.hpp"
#include "vinn/training.hpp"
