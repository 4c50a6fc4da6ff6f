#pragma once

// Umbrella header: the whole library in one include.

#include "latentbridge/bridge.hpp"
#include "latentbridge/clip.hpp"
#include "latentbridge/config.hpp"
#include "latentbridge/ddim.hpp"
#include "latentbridge/errors.hpp"
#include "latentbridge/harness.hpp"
#include "latentbridge/io.hpp"
#include "latentbridge/metrics.hpp"
#include "latentbridge/rng.hpp"
#include "latentbridge/schedule.hpp"
#include "latentbridge/version.hpp"
#include "latentbridge/world.hpp"
