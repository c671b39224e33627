#pragma once

#include "wateruse/generator.hpp"

namespace wateruse {

/// Synthetic stand-in for a regional calibration: procedural signatures for the five fixtures
/// at 1 s resolution.
SignatureLibrary default_library();

/// Priors sized so that about 99% of each fixture's mass falls inside the target feature
/// ranges, paired with default_library().
UsageModel default_model();

}  // namespace wateruse
