#pragma once

// Policy-gradient pieces for the joint score: returns, the exact immediate
// baseline, per-index advantages, and the critic regression target.
//
// Indices m run 1..N in the docs and 0..N-1 in the vectors.

#include <span>
#include <vector>

#include <json.hpp>

#include "uprm/core/first_error.hpp"
#include "uprm/core/trajectory.hpp"
#include "uprm/diffnum/tensor.hpp"
#include "uprm/prm/model.hpp"
#include "uprm/scorer/backend.hpp"
#include "uprm/scorer/conversation.hpp"

namespace uprm::estimator {

using diffnum::Tensor;

struct ReturnSeries {
  std::vector<double> scores;   // S(j_m | j_<m), size N
  std::vector<double> returns;  // G_1..G_{N+1}, size N + 1, last entry 0

  std::size_t size() const noexcept { return scores.size(); }
  /// G_m for m in 1..N+1.
  double G(std::size_t m) const { return returns.at(m - 1); }
};

ReturnSeries compute_returns(std::span<const double> scores);

/// sum_j p(j) S(j). Sizes must match.
double immediate_baseline(std::span<const double> candidate_scores, std::span<const double> probs);

/// Exact b_m: scores every candidate j for trajectory m given the earlier
/// positions, then takes the expectation under `dist`. `history` holds
/// j_1..j_{m-1} for batch[0..m-2]; batch[m-1] is the trajectory scored.
double immediate_baseline(scorer::ScorerBackend& backend, std::span<const Trajectory> batch,
                          std::span<const FirstErrorPosition> history, std::size_t m,
                          const FirstErrorDistribution& dist, const scorer::PromptTemplate& tmpl = {});

/// Per-index rewards whose sum is the corrected joint score:
/// r_m = S_m / N, plus correction / N on the last index (the correction
/// depends on every position, so it is only known once j_N is drawn).
std::vector<double> joint_rewards(std::span<const double> conditional_scores, double correction);

/// Reward of each candidate j = 1..T+1 at index m given j_<m. On the last
/// index (history.size() + 1 == N) the correction for history + j is added.
std::vector<double> candidate_rewards(std::span<const double> candidate_scores,
                                      std::span<const FirstErrorPosition> history, std::size_t batch_size,
                                      double rho);

struct AdvantageRecord {
  double immediate = 0.0;  // S_m - b_m
  double future = 0.0;     // G_{m+1} - V_m
  double total = 0.0;      // weight on grad log p(j_m)

  friend bool operator==(const AdvantageRecord&, const AdvantageRecord&) = default;
};

/// Throws DomainError when the series lengths disagree.
std::vector<AdvantageRecord> compute_advantages(const ReturnSeries& returns, std::span<const double> baselines,
                                                std::span<const double> critic_values);

/// sum_m A_m log p(j_m); advantages are constants, so backward() gives the
/// estimator gradient. `selected_log_probs[m]` is a 1 x 1 graph node.
Tensor surrogate_objective(std::span<const Tensor> selected_log_probs, std::span<const AdvantageRecord> advantages);

/// The same gradient as plain vectors in parameters() order.
std::vector<std::vector<double>> assemble_gradient(const prm::PrmModel& model, std::span<const Trajectory> batch,
                                                   std::span<const FirstErrorPosition> positions,
                                                   std::span<const AdvantageRecord> advantages);

/// Mean of (G_{m+1} - V_m)^2 over m = 1..N-1. `critic_values` is N x 1 (or
/// longer than N-1 rows; extra rows are ignored). Returns a zero scalar with
/// a warning when N < 2.
Tensor critic_loss(const ReturnSeries& returns, const Tensor& critic_values);
double critic_loss_value(const ReturnSeries& returns, std::span<const double> critic_values);

struct BatchDiagnostics {
  std::vector<std::string> trajectory_ids;
  std::vector<int> positions;
  std::vector<double> scores;
  std::vector<double> baselines;
  std::vector<double> critic_values;
  std::vector<AdvantageRecord> advantages;
};

/// One JSONL record.
nlohmann::json to_json(const BatchDiagnostics& d);

}  // namespace uprm::estimator
