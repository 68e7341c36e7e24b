#include "uprm/core/trajectory.hpp"

#include <algorithm>
#include <cctype>
#include <string>
#include <unordered_set>

#include "uprm/errors.hpp"

namespace uprm {

namespace {

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

void Trajectory::validate() const {
  if (steps.empty()) {
    throw DataError("trajectory '" + id + "' has no steps");
  }
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (is_blank(steps[i])) {
      throw DataError("trajectory '" + id + "' step " + std::to_string(i + 1) + " is empty");
    }
  }
  if (gold_first_error && (*gold_first_error < 1 || *gold_first_error > no_error_position())) {
    throw DataError("trajectory '" + id + "' first_error " + std::to_string(*gold_first_error) +
                    " outside [1, " + std::to_string(no_error_position()) + "]");
  }
}

Trajectory Trajectory::truncated(int kept) const {
  if (kept < 1 || kept > num_steps()) {
    throw DomainError("cannot keep " + std::to_string(kept) + " of " +
                      std::to_string(num_steps()) + " steps");
  }
  Trajectory out = *this;
  out.steps.resize(static_cast<std::size_t>(kept));
  out.gold_first_error.reset();
  if (kept < num_steps()) {
    out.final_answer.reset();
  }
  return out;
}

FirstErrorPosition::FirstErrorPosition(int j, int num_steps) : j_(j), num_steps_(num_steps) {
  if (num_steps < 1 || j < 1 || j > num_steps + 1) {
    throw DomainError("first-error position " + std::to_string(j) + " outside [1, " +
                      std::to_string(num_steps + 1) + "]");
  }
}

std::size_t TrajectoryDataset::total_steps() const noexcept {
  std::size_t total = 0;
  for (const auto& t : trajectories) total += t.steps.size();
  return total;
}

void TrajectoryDataset::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& t : trajectories) {
    t.validate();
    if (!seen.insert(t.id).second) {
      throw DataError("duplicate trajectory id '" + t.id + "'");
    }
    if (label_mode == LabelMode::kUnlabeled && t.gold_first_error) {
      throw DataError("trajectory '" + t.id + "' carries a label in an unlabeled dataset");
    }
  }
}

TrajectoryDataset TrajectoryDataset::without_labels() const {
  TrajectoryDataset out = *this;
  out.label_mode = LabelMode::kUnlabeled;
  for (auto& t : out.trajectories) t.gold_first_error.reset();
  return out;
}

}  // namespace uprm
