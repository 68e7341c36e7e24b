#include "uprm/estimator/estimator.hpp"

#include <cmath>
#include <string>

#include "uprm/errors.hpp"
#include "uprm/log.hpp"
#include "uprm/scorer/score.hpp"

namespace uprm::estimator {

ReturnSeries compute_returns(std::span<const double> scores) {
  ReturnSeries r;
  r.scores.assign(scores.begin(), scores.end());
  r.returns.assign(scores.size() + 1, 0.0);
  for (std::size_t m = scores.size(); m-- > 0;) r.returns[m] = scores[m] + r.returns[m + 1];
  return r;
}

double immediate_baseline(std::span<const double> candidate_scores, std::span<const double> probs) {
  if (candidate_scores.size() != probs.size() || probs.empty()) {
    throw DomainError("baseline needs one probability per candidate (" + std::to_string(candidate_scores.size()) +
                      " scores, " + std::to_string(probs.size()) + " probabilities)");
  }
  double b = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (probs[j] > 0.0) b += probs[j] * candidate_scores[j];
  }
  return b;
}

double immediate_baseline(scorer::ScorerBackend& backend, std::span<const Trajectory> batch,
                          std::span<const FirstErrorPosition> history, std::size_t m,
                          const FirstErrorDistribution& dist, const scorer::PromptTemplate& tmpl) {
  if (m == 0 || m > batch.size() || history.size() < m - 1) {
    throw DomainError("baseline index " + std::to_string(m) + " outside batch of " + std::to_string(batch.size()));
  }
  const auto scores = scorer::candidate_scores(backend, batch.first(m - 1), history.first(m - 1), batch[m - 1], tmpl);
  return immediate_baseline(scores, dist.probs());
}

std::vector<double> joint_rewards(std::span<const double> conditional_scores, double correction) {
  const double n = static_cast<double>(conditional_scores.size());
  std::vector<double> r;
  r.reserve(conditional_scores.size());
  for (double s : conditional_scores) r.push_back(s / n);
  if (!r.empty()) r.back() += correction / n;
  return r;
}

std::vector<double> candidate_rewards(std::span<const double> candidate_scores,
                                      std::span<const FirstErrorPosition> history, std::size_t batch_size,
                                      double rho) {
  if (history.size() >= batch_size) throw DomainError("history already covers the whole batch");
  const double n = static_cast<double>(batch_size);
  std::vector<double> r;
  r.reserve(candidate_scores.size());
  const bool last = history.size() + 1 == batch_size;
  std::vector<FirstErrorPosition> all(history.begin(), history.end());
  const int T = static_cast<int>(candidate_scores.size()) - 1;
  for (std::size_t j = 0; j < candidate_scores.size(); ++j) {
    double v = candidate_scores[j] / n;
    if (last) {
      all.push_back(FirstErrorPosition(static_cast<int>(j) + 1, T));
      v += scorer::compute_correction(all, rho).value / n;
      all.pop_back();
    }
    r.push_back(v);
  }
  return r;
}

std::vector<AdvantageRecord> compute_advantages(const ReturnSeries& returns, std::span<const double> baselines,
                                                std::span<const double> critic_values) {
  const std::size_t n = returns.size();
  if (baselines.size() != n || critic_values.size() != n || returns.returns.size() != n + 1) {
    throw DomainError("advantage inputs misaligned: " + std::to_string(n) + " scores, " +
                      std::to_string(baselines.size()) + " baselines, " + std::to_string(critic_values.size()) +
                      " critic values");
  }
  std::vector<AdvantageRecord> out(n);
  for (std::size_t m = 0; m < n; ++m) {
    out[m].immediate = returns.scores[m] - baselines[m];
    out[m].future = returns.returns[m + 1] - critic_values[m];
    out[m].total = out[m].immediate + out[m].future;
  }
  return out;
}

Tensor surrogate_objective(std::span<const Tensor> selected_log_probs, std::span<const AdvantageRecord> advantages) {
  if (selected_log_probs.size() != advantages.size() || advantages.empty()) {
    throw DomainError("surrogate needs one log-probability per advantage");
  }
  Tensor total;
  for (std::size_t m = 0; m < advantages.size(); ++m) {
    const Tensor term = diffnum::scale(selected_log_probs[m], advantages[m].total);
    total = total.defined() ? diffnum::add(total, term) : term;
  }
  return total;
}

std::vector<std::vector<double>> assemble_gradient(const prm::PrmModel& model, std::span<const Trajectory> batch,
                                                   std::span<const FirstErrorPosition> positions,
                                                   std::span<const AdvantageRecord> advantages) {
  if (batch.size() != positions.size() || batch.size() != advantages.size()) {
    throw DomainError("gradient inputs misaligned");
  }
  std::vector<std::vector<double>> total;
  for (const auto& p : model.parameters()) total.emplace_back(p.tensor.size(), 0.0);
  for (std::size_t m = 0; m < batch.size(); ++m) {
    if (advantages[m].total == 0.0) continue;
    const auto g = prm::log_prob_grad(model, batch[m], positions[m].value());
    for (std::size_t k = 0; k < g.size(); ++k) {
      for (std::size_t i = 0; i < g[k].size(); ++i) total[k][i] += advantages[m].total * g[k][i];
    }
  }
  return total;
}

Tensor critic_loss(const ReturnSeries& returns, const Tensor& critic_values) {
  const std::size_t n = returns.size();
  if (n < 2) {
    log::warn("critic loss needs at least two trajectories per batch; using 0");
    return Tensor::scalar(0.0);
  }
  if (critic_values.cols() != 1 || critic_values.rows() < n - 1) {
    throw DomainError("critic values " + critic_values.shape().str() + " do not cover " + std::to_string(n - 1) +
                      " targets");
  }
  std::vector<double> targets(returns.returns.begin() + 1, returns.returns.begin() + static_cast<long>(n));
  const Tensor target = Tensor::from_values(n - 1, 1, std::move(targets));
  const Tensor diff = diffnum::sub(target, diffnum::slice_rows(critic_values, 0, n - 1));
  return diffnum::mean(diffnum::mul(diff, diff));
}

double critic_loss_value(const ReturnSeries& returns, std::span<const double> critic_values) {
  const std::size_t n = returns.size();
  if (n < 2) {
    log::warn("critic loss needs at least two trajectories per batch; using 0");
    return 0.0;
  }
  if (critic_values.size() < n - 1) throw DomainError("critic values do not cover every target");
  double acc = 0.0;
  for (std::size_t m = 0; m + 1 < n; ++m) {
    const double d = returns.returns[m + 1] - critic_values[m];
    acc += d * d;
  }
  return acc / static_cast<double>(n - 1);
}

nlohmann::json to_json(const BatchDiagnostics& d) {
  nlohmann::json adv = nlohmann::json::array();
  for (const auto& a : d.advantages) adv.push_back({{"immediate", a.immediate}, {"future", a.future}, {"total", a.total}});
  return {{"ids", d.trajectory_ids},         {"positions", d.positions}, {"scores", d.scores},
          {"baselines", d.baselines},        {"critic_values", d.critic_values}, {"advantages", adv}};
}

}  // namespace uprm::estimator
