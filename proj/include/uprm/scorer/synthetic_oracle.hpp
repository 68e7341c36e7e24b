#pragma once

// Label-conditioned stand-in for the judge LLM.
//
// The oracle holds an answer key (trajectory id -> gold first error); step t
// of a trajectory is correct iff t < gold. Two noise models:
//
//   kDeterministic  p+ = a on correct steps, 1 - a on incorrect ones.
//   kFlip           each (trajectory, step) is perceived correctly with
//                   probability a, decided once by a seeded hash, so the
//                   oracle is consistently wrong on the same steps; the
//                   perceived label gets p+ = kappa (or 1 - kappa).
//
// Both are clamped to [eps, 1 - eps]. With drift d > 0 the oracle copies
// the markers already in context:
//   p- = (1 - d) * p-_base + d * f,
// where f is the fraction of "-" among all earlier assistant markers in
// the conversation (no drift when there are none). This reproduces the
// in-context collapse toward all-first or all-last labelings.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>

#include "uprm/core/trajectory.hpp"
#include "uprm/scorer/backend.hpp"

namespace uprm::scorer {

enum class OracleNoise { kDeterministic, kFlip };

struct SyntheticOracleConfig {
  double accuracy = 0.9;
  /// Confidence for kFlip; defaults to `accuracy`.
  std::optional<double> confidence;
  double drift = 0.0;
  OracleNoise noise = OracleNoise::kFlip;
  std::uint64_t seed = 0;
  std::optional<std::size_t> max_context_chars;

  void validate() const;
};

class SyntheticOracle : public ScorerBackend {
 public:
  /// `answer_key` maps trajectory ids to gold first-error positions.
  SyntheticOracle(SyntheticOracleConfig config, std::unordered_map<std::string, int> answer_key);

  /// Builds the answer key from a labeled dataset.
  static SyntheticOracle from_dataset(SyntheticOracleConfig config, const TrajectoryDataset& labeled);

  MarkerProbabilities query_markers(const Conversation& conversation) override;
  std::string identity() const override;

  /// Drift-free p+ for one step.
  double base_plus(const std::string& trajectory_id, int step) const;
  /// Whether the oracle perceives the step's true label.
  bool perceives_correctly(const std::string& trajectory_id, int step) const;

  const SyntheticOracleConfig& config() const noexcept { return config_; }

 private:
  SyntheticOracleConfig config_;
  std::unordered_map<std::string, int> answer_key_;
  std::uint64_t key_digest_ = 0;
};

}  // namespace uprm::scorer
