#pragma once

#include <span>
#include <vector>

#include "uprm/core/trajectory.hpp"
#include "uprm/scorer/backend.hpp"
#include "uprm/scorer/conversation.hpp"

namespace uprm::scorer {

inline constexpr double kDefaultRho = 0.25;

/// Log-score of one marked sequence from its marker probabilities:
///   1[j <= T] log p-_j + sum_{t<j} log p+_t,
/// with each probability clamped to [eps, 1 - eps].
struct SequenceScore {
  double value = 0.0;
  bool clamped = false;
};

SequenceScore sequence_score(std::span<const MarkerProb> probs, int j, int num_steps);

struct SingleScore {
  double value = 0.0;
  bool clamped = false;
  MarkerProbabilities marker_probs;
};

SingleScore score_single(ScorerBackend& backend, const Trajectory& trajectory, const FirstErrorPosition& j,
                         const PromptTemplate& tmpl = {});

/// Penalty against batches that collapse onto corner positions (j = 1 or
/// j = T + 1). W_n = 1 + ln sqrt(T_n + 1), S_max = sum W_n,
/// B = (1 - rho) S_max, S_corner = sum of W_n over corner positions, and
/// the correction is -max(0, S_corner - B).
struct CorrectionTerm {
  std::vector<double> weights;
  double s_first = 0.0;
  double s_last = 0.0;
  double s_corner = 0.0;
  double s_max = 0.0;
  double budget = 0.0;
  double value = 0.0;
};

CorrectionTerm compute_correction(std::span<const FirstErrorPosition> positions, double rho = kDefaultRho);

struct ScoreBreakdown {
  /// S(j_n | j_<n) for each trajectory, in batch order.
  std::vector<double> conditional_scores;
  std::vector<MarkerProbabilities> marker_probs;
  double raw = 0.0;  // mean of conditional_scores
  CorrectionTerm correction;
  double corrected = 0.0;  // raw + correction / N
  bool clamped = false;
};

/// Concatenates the marked sequences of all trajectories into one context
/// (one backend query) and scores each conditioned on the ones before it.
ScoreBreakdown score_joint(ScorerBackend& backend, std::span<const Trajectory> trajectories,
                           std::span<const FirstErrorPosition> positions, double rho = kDefaultRho,
                           const PromptTemplate& tmpl = {});

/// S(j | history) for every candidate j = 1..T+1 of `trajectory`, where the
/// history is the marked sequences of earlier trajectories at their chosen
/// positions. One backend query: trajectory rendered all-plus after the
/// history, and S(j) read from p+_t for t < j and p-_j = 1 - p+_j.
std::vector<double> candidate_scores(ScorerBackend& backend, std::span<const Trajectory> history,
                                     std::span<const FirstErrorPosition> history_positions,
                                     const Trajectory& trajectory, const PromptTemplate& tmpl = {});

/// Marker probabilities of `trajectory` rendered all-plus after the history.
MarkerProbabilities candidate_marker_probs(ScorerBackend& backend, std::span<const Trajectory> history,
                                           std::span<const FirstErrorPosition> history_positions,
                                           const Trajectory& trajectory, const PromptTemplate& tmpl = {});

/// Scores for every candidate from all-plus marker probabilities.
std::vector<double> candidate_scores_from_probs(std::span<const MarkerProb> all_plus_probs);

}  // namespace uprm::scorer
