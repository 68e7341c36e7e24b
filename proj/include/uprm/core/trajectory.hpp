#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace uprm {

/// A problem and an ordered list of reasoning steps. The optional gold label
/// is 1-based: a value in [1, T] is the first erroneous step, T+1 means the
/// whole trajectory is correct.
struct Trajectory {
  std::string id;
  std::string problem;
  std::vector<std::string> steps;
  std::optional<int> gold_first_error;
  std::optional<std::string> final_answer;

  int num_steps() const noexcept { return static_cast<int>(steps.size()); }
  int no_error_position() const noexcept { return num_steps() + 1; }

  /// Throws DataError when the invariants do not hold.
  void validate() const;

  /// Copy keeping only steps 1..kept. The gold label is dropped: truncated
  /// trajectories are treated as unlabeled.
  Trajectory truncated(int kept) const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Candidate first-error position j in 1..T+1 for a trajectory of T steps.
class FirstErrorPosition {
 public:
  /// Throws DomainError unless 1 <= j <= num_steps + 1.
  FirstErrorPosition(int j, int num_steps);

  int value() const noexcept { return j_; }
  int num_steps() const noexcept { return num_steps_; }
  bool is_no_error() const noexcept { return j_ == num_steps_ + 1; }
  bool is_first() const noexcept { return j_ == 1; }
  bool is_corner() const noexcept { return is_first() || is_no_error(); }

  friend bool operator==(const FirstErrorPosition&, const FirstErrorPosition&) = default;

 private:
  int j_;
  int num_steps_;
};

enum class LabelMode { kUnlabeled, kLabeled };

struct TrajectoryDataset {
  std::vector<Trajectory> trajectories;
  std::string source_path;
  LabelMode label_mode = LabelMode::kUnlabeled;

  std::size_t size() const noexcept { return trajectories.size(); }
  std::size_t total_steps() const noexcept;

  /// Throws DataError on duplicate ids, invalid trajectories, or labels
  /// present in unlabeled mode.
  void validate() const;

  /// Same trajectories with every gold label removed.
  TrajectoryDataset without_labels() const;
};

}  // namespace uprm
