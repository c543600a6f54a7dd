#pragma once

// Umbrella header.

#include "cmta/checkpoint.hpp"
#include "cmta/config.hpp"
#include "cmta/contrastive.hpp"
#include "cmta/distributions.hpp"
#include "cmta/envs.hpp"
#include "cmta/metrics.hpp"
#include "cmta/model.hpp"
#include "cmta/nn.hpp"
#include "cmta/replay.hpp"
#include "cmta/rng.hpp"
#include "cmta/runner.hpp"
#include "cmta/tape.hpp"
#include "cmta/trainer.hpp"
