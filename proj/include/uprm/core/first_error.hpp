#pragma once

#include <span>
#include <vector>

#include "uprm/core/trajectory.hpp"

namespace uprm {

/// Probabilities are clamped into [kProbEpsilon, 1 - kProbEpsilon] before logs.
inline constexpr double kProbEpsilon = 1e-7;

struct LogLikelihood {
  double value = 0.0;
  bool clamped = false;  // some input probability was saturated at 0 or 1
};

/// log p(j | tau) for the chain of per-step correctness probabilities:
///   1[j <= T] * log(1 - p_j) + sum_{t < j} log p_t.
/// Throws DomainError when j is outside [1, T+1] or a probability is outside [0, 1].
LogLikelihood first_error_log_likelihood(std::span<const double> step_correct_probs, int j);

/// Distribution over first-error positions 1..T+1 induced by per-step
/// correctness probabilities.
class FirstErrorDistribution {
 public:
  /// Builds log p(j) for every j from the telescoping factorization.
  static FirstErrorDistribution from_step_probs(std::vector<double> step_correct_probs);

  /// Adopts precomputed log-probabilities (e.g. from an autodiff graph) and
  /// checks them against the factorization to 1e-9.
  static FirstErrorDistribution from_parts(std::vector<double> step_correct_probs,
                                           std::vector<double> log_probs);

  int num_steps() const noexcept { return static_cast<int>(step_correct_probs_.size()); }
  std::span<const double> log_probs() const noexcept { return log_probs_; }
  std::span<const double> step_correct_probs() const noexcept { return step_correct_probs_; }

  /// p(j), 1-based.
  double prob(int j) const;
  double log_prob(int j) const;
  std::vector<double> probs() const;

  /// Lowest-index argmax, 1-based.
  int argmax() const;

 private:
  FirstErrorDistribution(std::vector<double> step_probs, std::vector<double> log_probs)
      : step_correct_probs_(std::move(step_probs)), log_probs_(std::move(log_probs)) {}

  std::vector<double> step_correct_probs_;
  std::vector<double> log_probs_;
};

/// Shannon entropy in nats, with 0 log 0 = 0.
double distribution_entropy(std::span<const double> probs);
double distribution_entropy(const FirstErrorDistribution& dist);

}  // namespace uprm
