#pragma once

// Labeled arithmetic-style reasoning traces with known first errors.
//
// Correct steps come from a pool of sound templates. The first erroneous
// step is drawn from a pool of flawed templates (each carries a tell-tale
// phrase and a wrong result); steps after it mix both pools. The gold label
// is uniform over 1..T+1, so about 1/(T+1) of traces are fully correct.

#include <cstdint>

#include "uprm/core/trajectory.hpp"

namespace uprm {

struct SyntheticTaskConfig {
  std::size_t count = 3000;
  int min_steps = 3;
  int max_steps = 8;
  /// Probability that a step after the first error is also flawed.
  double later_flaw_rate = 0.5;
  std::uint64_t seed = 0;
  std::string id_prefix = "synth";

  void validate() const;
};

/// Labeled dataset; ids are "<prefix>-<seed>-<index>".
TrajectoryDataset generate_synthetic_task(const SyntheticTaskConfig& config);

}  // namespace uprm
