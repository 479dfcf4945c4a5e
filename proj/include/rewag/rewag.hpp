#pragma once

// Umbrella header for the full pipeline: tiling geometry, synthetic
// world, pose-aware embeddings, particle filter, and experiment runner.

#include "rewag/binary_io.hpp"
#include "rewag/config.hpp"
#include "rewag/embed.hpp"
#include "rewag/errors.hpp"
#include "rewag/filter.hpp"
#include "rewag/geometry.hpp"
#include "rewag/loss.hpp"
#include "rewag/parallel.hpp"
#include "rewag/rng.hpp"
#include "rewag/runner.hpp"
#include "rewag/text_io.hpp"
#include "rewag/trajectory.hpp"
#include "rewag/world.hpp"
