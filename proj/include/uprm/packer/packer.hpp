#pragma once

// Step-budget batching. Each epoch walks a seeded permutation of the
// dataset and fills batches until their step count reaches the budget; a
// trajectory that does not fit is cut to its first `remaining` steps and
// its tail is dropped. The last batch of an epoch may fall short.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uprm/core/trajectory.hpp"

namespace uprm::packer {

inline constexpr int kDefaultStepBudget = 80;

struct TruncationRecord {
  std::string trajectory_id;
  int original_steps = 0;
  int kept_steps = 0;

  friend bool operator==(const TruncationRecord&, const TruncationRecord&) = default;
};

struct PackedBatch {
  std::vector<Trajectory> trajectories;
  int total_steps = 0;
  std::optional<TruncationRecord> truncation;  // only the last trajectory can be cut
  std::uint64_t epoch = 0;
  std::size_t index_in_epoch = 0;
  bool final_in_epoch = false;

  friend bool operator==(const PackedBatch&, const PackedBatch&) = default;
};

struct PackerState {
  std::uint64_t epoch = 0;
  std::size_t cursor = 0;          // position in the epoch's permutation
  std::size_t batch_in_epoch = 0;

  friend bool operator==(const PackerState&, const PackerState&) = default;
};

/// Packs trajectories in the given order (no shuffling), one pass.
std::vector<PackedBatch> pack_sequence(const std::vector<Trajectory>& ordered, int step_budget);

nlohmann::json to_json(const PackerState& s);
PackerState packer_state_from_json(const nlohmann::json& j);

class Packer {
 public:
  /// Keeps a reference to `dataset`. Throws ConfigError for budget < 1 and
  /// DataError for an empty dataset or a trajectory without steps.
  Packer(const TrajectoryDataset& dataset, int step_budget, std::uint64_t seed);

  /// Next batch; wraps into a fresh permutation after each epoch.
  PackedBatch next();

  /// Every batch of the current epoch from the current position.
  std::vector<PackedBatch> rest_of_epoch();

  const PackerState& state() const noexcept { return state_; }
  void restore(const PackerState& state);
  int step_budget() const noexcept { return budget_; }

  /// Order of dataset indices for an epoch.
  std::vector<std::size_t> permutation(std::uint64_t epoch) const;

 private:
  friend std::vector<PackedBatch> pack_sequence(const std::vector<Trajectory>&, int);

  const TrajectoryDataset* dataset_;
  int budget_;
  std::uint64_t seed_;
  PackerState state_;
  std::vector<std::size_t> order_;
  std::uint64_t order_epoch_ = ~std::uint64_t{0};
};

}  // namespace uprm::packer
