#include "uprm/scorer/score.hpp"

#include <algorithm>
#include <cmath>

#include "uprm/core/first_error.hpp"
#include "uprm/errors.hpp"

namespace uprm::scorer {

namespace {

double clamped_log(double p, bool& clamped) {
  const double c = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
  clamped |= c != p;
  return std::log(c);
}

void check_slot_count(const MarkerProbabilities& probs, std::size_t expected) {
  if (probs.size() != expected) {
    throw BackendError("backend returned " + std::to_string(probs.size()) + " marker probabilities for " +
                           std::to_string(expected) + " markers",
                       false);
  }
}

std::vector<MarkedSequence> render_history(std::span<const Trajectory> history,
                                           std::span<const FirstErrorPosition> positions,
                                           const PromptTemplate& tmpl) {
  if (history.size() != positions.size()) {
    throw DomainError("history has " + std::to_string(history.size()) + " trajectories and " +
                      std::to_string(positions.size()) + " positions");
  }
  std::vector<MarkedSequence> seqs;
  seqs.reserve(history.size() + 1);
  for (std::size_t n = 0; n < history.size(); ++n) seqs.push_back(render_marked_sequence(history[n], positions[n], tmpl));
  return seqs;
}

}  // namespace

SequenceScore sequence_score(std::span<const MarkerProb> probs, int j, int num_steps) {
  if (j < 1 || j > num_steps + 1) throw DomainError("position " + std::to_string(j) + " outside [1, T+1]");
  if (static_cast<int>(probs.size()) < std::min(j, num_steps)) throw DomainError("too few marker probabilities");
  SequenceScore s;
  for (int t = 1; t < j; ++t) s.value += clamped_log(probs[t - 1].p_plus, s.clamped);
  if (j <= num_steps) s.value += clamped_log(probs[j - 1].p_minus, s.clamped);
  return s;
}

SingleScore score_single(ScorerBackend& backend, const Trajectory& trajectory, const FirstErrorPosition& j,
                         const PromptTemplate& tmpl) {
  const MarkedSequence seq = render_marked_sequence(trajectory, j, tmpl);
  const Conversation conv = build_conversation(tmpl, std::span(&seq, 1));
  SingleScore out;
  out.marker_probs = backend.query_markers(conv);
  check_slot_count(out.marker_probs, conv.slots.size());
  const auto s = sequence_score(out.marker_probs, j.value(), trajectory.num_steps());
  out.value = s.value;
  out.clamped = s.clamped;
  return out;
}

CorrectionTerm compute_correction(std::span<const FirstErrorPosition> positions, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  CorrectionTerm c;
  for (const auto& p : positions) {
    const double w = 1.0 + std::log(std::sqrt(static_cast<double>(p.num_steps()) + 1.0));
    c.weights.push_back(w);
    c.s_max += w;
    if (p.is_first()) c.s_first += w;
    if (p.is_no_error()) c.s_last += w;
  }
  c.s_corner = c.s_first + c.s_last;
  c.budget = (1.0 - rho) * c.s_max;
  c.value = -std::max(0.0, c.s_corner - c.budget);
  return c;
}

ScoreBreakdown score_joint(ScorerBackend& backend, std::span<const Trajectory> trajectories,
                           std::span<const FirstErrorPosition> positions, double rho, const PromptTemplate& tmpl) {
  if (trajectories.empty()) throw DomainError("joint score needs at least one trajectory");
  const auto seqs = render_history(trajectories, positions, tmpl);
  const Conversation conv = build_conversation(tmpl, seqs);
  const MarkerProbabilities probs = backend.query_markers(conv);
  check_slot_count(probs, conv.slots.size());

  ScoreBreakdown b;
  const std::size_t n_traj = trajectories.size();
  b.marker_probs.resize(n_traj);
  for (std::size_t s = 0; s < conv.slots.size(); ++s) b.marker_probs[conv.slots[s].sequence_index].push_back(probs[s]);
  for (std::size_t n = 0; n < n_traj; ++n) {
    const auto s = sequence_score(b.marker_probs[n], positions[n].value(), trajectories[n].num_steps());
    b.conditional_scores.push_back(s.value);
    b.clamped |= s.clamped;
    b.raw += s.value;
  }
  b.raw /= static_cast<double>(n_traj);
  b.correction = compute_correction(positions, rho);
  b.corrected = b.raw + b.correction.value / static_cast<double>(n_traj);
  return b;
}

MarkerProbabilities candidate_marker_probs(ScorerBackend& backend, std::span<const Trajectory> history,
                                           std::span<const FirstErrorPosition> history_positions,
                                           const Trajectory& trajectory, const PromptTemplate& tmpl) {
  auto seqs = render_history(history, history_positions, tmpl);
  seqs.push_back(
      render_marked_sequence(trajectory, FirstErrorPosition(trajectory.no_error_position(), trajectory.num_steps()), tmpl));
  const Conversation conv = build_conversation(tmpl, seqs);
  const MarkerProbabilities probs = backend.query_markers(conv);
  check_slot_count(probs, conv.slots.size());
  MarkerProbabilities own;
  for (std::size_t s = 0; s < conv.slots.size(); ++s) {
    if (conv.slots[s].sequence_index == history.size()) own.push_back(probs[s]);
  }
  return own;
}

std::vector<double> candidate_scores_from_probs(std::span<const MarkerProb> all_plus_probs) {
  const int T = static_cast<int>(all_plus_probs.size());
  std::vector<double> scores;
  scores.reserve(T + 1);
  for (int j = 1; j <= T + 1; ++j) scores.push_back(sequence_score(all_plus_probs, j, T).value);
  return scores;
}

std::vector<double> candidate_scores(ScorerBackend& backend, std::span<const Trajectory> history,
                                     std::span<const FirstErrorPosition> history_positions,
                                     const Trajectory& trajectory, const PromptTemplate& tmpl) {
  return candidate_scores_from_probs(candidate_marker_probs(backend, history, history_positions, trajectory, tmpl));
}

}  // namespace uprm::scorer
