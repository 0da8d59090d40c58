#pragma once

#include "winflow/checkpoint.hpp"
#include "winflow/config.hpp"
#include "winflow/env.hpp"
#include "winflow/flow.hpp"
#include "winflow/metrics.hpp"
#include "winflow/mlp.hpp"
#include "winflow/replay.hpp"
#include "winflow/retrieval.hpp"
#include "winflow/rng.hpp"
#include "winflow/training.hpp"
#include "winflow/util.hpp"
