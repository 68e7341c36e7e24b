#include "uprm/core/first_error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uprm/errors.hpp"

namespace uprm {

namespace {

double clamp_prob(double p, bool& clamped) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw DomainError("probability " + std::to_string(p) + " outside [0, 1]");
  }
  if (p < kProbEpsilon) {
    clamped = true;
    return kProbEpsilon;
  }
  if (p > 1.0 - kProbEpsilon) {
    clamped = true;
    return 1.0 - kProbEpsilon;
  }
  return p;
}

std::vector<double> factorized_log_probs(std::span<const double> probs) {
  const std::size_t T = probs.size();
  std::vector<double> out(T + 1);
  double prefix = 0.0;  // sum_{t<j} log p_t
  bool clamped = false;
  for (std::size_t t = 0; t < T; ++t) {
    const double p = clamp_prob(probs[t], clamped);
    out[t] = prefix + std::log1p(-p);
    prefix += std::log(p);
  }
  out[T] = prefix;
  return out;
}

}  // namespace

LogLikelihood first_error_log_likelihood(std::span<const double> step_correct_probs, int j) {
  const int T = static_cast<int>(step_correct_probs.size());
  if (T < 1 || j < 1 || j > T + 1) {
    throw DomainError("first-error position " + std::to_string(j) + " outside [1, " +
                      std::to_string(T + 1) + "]");
  }
  LogLikelihood out;
  for (int t = 1; t < j; ++t) {
    out.value += std::log(clamp_prob(step_correct_probs[t - 1], out.clamped));
  }
  if (j <= T) {
    out.value += std::log1p(-clamp_prob(step_correct_probs[j - 1], out.clamped));
  }
  return out;
}

FirstErrorDistribution FirstErrorDistribution::from_step_probs(std::vector<double> step_correct_probs) {
  if (step_correct_probs.empty()) {
    throw DomainError("first-error distribution needs at least one step");
  }
  auto log_probs = factorized_log_probs(step_correct_probs);
  return FirstErrorDistribution(std::move(step_correct_probs), std::move(log_probs));
}

FirstErrorDistribution FirstErrorDistribution::from_parts(std::vector<double> step_correct_probs,
                                                          std::vector<double> log_probs) {
  if (step_correct_probs.empty() || log_probs.size() != step_correct_probs.size() + 1) {
    throw DomainError("first-error distribution expects T step probabilities and T+1 log-probabilities");
  }
  const auto expected = factorized_log_probs(step_correct_probs);
  double total = 0.0;
  for (std::size_t j = 0; j < log_probs.size(); ++j) {
    const double p = std::exp(log_probs[j]);
    if (!std::isfinite(log_probs[j]) && log_probs[j] != -INFINITY) {
      throw NumericError("non-finite first-error log-probability");
    }
    if (std::abs(p - std::exp(expected[j])) > 1e-9) {
      throw NumericError("first-error log-probabilities disagree with the step factorization at j=" +
                         std::to_string(j + 1));
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw NumericError("first-error distribution sums to " + std::to_string(total));
  }
  return FirstErrorDistribution(std::move(step_correct_probs), std::move(log_probs));
}

double FirstErrorDistribution::log_prob(int j) const {
  if (j < 1 || j > num_steps() + 1) {
    throw DomainError("first-error position " + std::to_string(j) + " outside [1, " +
                      std::to_string(num_steps() + 1) + "]");
  }
  return log_probs_[static_cast<std::size_t>(j - 1)];
}

double FirstErrorDistribution::prob(int j) const { return std::exp(log_prob(j)); }

std::vector<double> FirstErrorDistribution::probs() const {
  std::vector<double> out(log_probs_.size());
  std::transform(log_probs_.begin(), log_probs_.end(), out.begin(),
                 [](double lp) { return std::exp(lp); });
  return out;
}

int FirstErrorDistribution::argmax() const {
  const auto it = std::max_element(log_probs_.begin(), log_probs_.end());
  return static_cast<int>(it - log_probs_.begin()) + 1;
}

double distribution_entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return std::max(h, 0.0);
}

double distribution_entropy(const FirstErrorDistribution& dist) {
  const auto p = dist.probs();
  return distribution_entropy(p);
}

}  // namespace uprm
