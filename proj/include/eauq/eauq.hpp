#pragma once

// Umbrella header for the expert-aware uncertainty estimation toolkit.

#include "eauq/data.hpp"
#include "eauq/errors.hpp"
#include "eauq/estimators.hpp"
#include "eauq/eval.hpp"
#include "eauq/mlp.hpp"
#include "eauq/pipeline.hpp"
#include "eauq/rng.hpp"
