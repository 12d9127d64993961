#pragma once

#include "rlver/emotion.hpp"
#include "rlver/error.hpp"
#include "rlver/gateway.hpp"
#include "rlver/hashing.hpp"
#include "rlver/metrics.hpp"
#include "rlver/optim.hpp"
#include "rlver/policy.hpp"
#include "rlver/prompts.hpp"
#include "rlver/report.hpp"
#include "rlver/reward.hpp"
#include "rlver/rollout.hpp"
#include "rlver/scenario.hpp"
#include "rlver/sim.hpp"
#include "rlver/strategy.hpp"
#include "rlver/text.hpp"
#include "rlver/train.hpp"
#include "rlver/transcript.hpp"
