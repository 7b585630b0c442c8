#pragma once

#include "nlts/config.hpp"
#include "nlts/envs.hpp"
#include "nlts/error.hpp"
#include "nlts/harness.hpp"
#include "nlts/linalg.hpp"
#include "nlts/matching.hpp"
#include "nlts/mlp.hpp"
#include "nlts/posterior.hpp"
#include "nlts/replay.hpp"
#include "nlts/rng.hpp"
#include "nlts/sampling.hpp"
#include "nlts/selftest.hpp"
