#include "uprm/packer/packer.hpp"

#include <numeric>

#include "uprm/core/random.hpp"
#include "uprm/errors.hpp"

namespace uprm::packer {

nlohmann::json to_json(const PackerState& s) {
  return {{"epoch", s.epoch}, {"cursor", s.cursor}, {"batch_in_epoch", s.batch_in_epoch}};
}

PackerState packer_state_from_json(const nlohmann::json& j) {
  try {
    return PackerState{j.at("epoch").get<std::uint64_t>(), j.at("cursor").get<std::size_t>(),
                       j.at("batch_in_epoch").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad packer state: ") + e.what());
  }
}

std::vector<PackedBatch> pack_sequence(const std::vector<Trajectory>& ordered, int step_budget) {
  TrajectoryDataset ds;
  ds.trajectories = ordered;
  Packer packer(ds, step_budget, 0);
  std::vector<std::size_t> identity(ordered.size());
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  packer.order_ = std::move(identity);
  packer.order_epoch_ = 0;
  return packer.rest_of_epoch();
}

Packer::Packer(const TrajectoryDataset& dataset, int step_budget, std::uint64_t seed)
    : dataset_(&dataset), budget_(step_budget), seed_(seed) {
  if (step_budget < 1) throw ConfigError("step budget must be at least 1, got " + std::to_string(step_budget));
  if (dataset.trajectories.empty()) throw DataError("cannot pack an empty dataset");
  for (const auto& t : dataset.trajectories) {
    if (t.steps.empty()) throw DataError("trajectory '" + t.id + "' has no steps");
  }
}

std::vector<std::size_t> Packer::permutation(std::uint64_t epoch) const {
  std::vector<std::size_t> order(dataset_->size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix64(seed_ ^ mix64(epoch + 0x7a11ULL)));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

void Packer::restore(const PackerState& state) {
  if (state.cursor > dataset_->size()) throw DataError("packer cursor beyond dataset size");
  state_ = state;
}

PackedBatch Packer::next() {
  if (state_.cursor >= dataset_->size()) {
    ++state_.epoch;
    state_.cursor = 0;
    state_.batch_in_epoch = 0;
  }
  if (order_epoch_ != state_.epoch) {
    order_ = permutation(state_.epoch);
    order_epoch_ = state_.epoch;
  }
  PackedBatch batch;
  batch.epoch = state_.epoch;
  batch.index_in_epoch = state_.batch_in_epoch++;
  while (batch.total_steps < budget_ && state_.cursor < order_.size()) {
    const Trajectory& t = dataset_->trajectories[order_[state_.cursor++]];
    const int remaining = budget_ - batch.total_steps;
    if (t.num_steps() <= remaining) {
      batch.trajectories.push_back(t);
      batch.total_steps += t.num_steps();
    } else {
      batch.trajectories.push_back(t.truncated(remaining));
      batch.total_steps += remaining;
      batch.truncation = TruncationRecord{t.id, t.num_steps(), remaining};
    }
  }
  batch.final_in_epoch = state_.cursor >= order_.size();
  return batch;
}

std::vector<PackedBatch> Packer::rest_of_epoch() {
  std::vector<PackedBatch> out;
  if (state_.cursor >= dataset_->size()) return out;
  do {
    out.push_back(next());
  } while (!out.back().final_in_epoch);
  return out;
}

}  // namespace uprm::packer
