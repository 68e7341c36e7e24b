#pragma once

// Exhaustive-enumeration oracle for the policy gradient on tiny batches.
//
// For a batch of N trajectories every joint configuration (j_1..j_N) is
// visited. The exact objective is
//   J = sum_config prod_n p(j_n) R(config),   R = corrected joint score,
// and its gradient is sum_config P(config) R(config) sum_n grad log p(j_n).
// The estimator value at each configuration is computed once, so Monte-Carlo
// draws only pick configurations.

#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "uprm/core/random.hpp"
#include "uprm/diffnum/optimizer.hpp"
#include "uprm/estimator/critic.hpp"
#include "uprm/estimator/estimator.hpp"
#include "uprm/prm/model.hpp"
#include "uprm/scorer/score.hpp"
#include "uprm/scorer/synthetic_oracle.hpp"

namespace uprm::testing {

using Flat = std::vector<double>;

inline Flat flatten(const std::vector<std::vector<double>>& g) {
  Flat out;
  for (const auto& v : g) out.insert(out.end(), v.begin(), v.end());
  return out;
}

struct TinyInstance {
  prm::PrmModel model;
  std::vector<Trajectory> batch;
  scorer::SyntheticOracle oracle;
  estimator::Critic critic;
  estimator::HistorySummarizer summarizer;
  double rho = scorer::kDefaultRho;
};

inline prm::PrmConfig tiny_prm_config(std::uint64_t seed) {
  prm::PrmConfig c;
  c.features.dim = 16;
  c.hidden = 4;
  c.head_hidden = 3;
  c.seed = seed;
  return c;
}

/// N trajectories of T steps, a PRM with a randomized head so p(j) is far
/// from symmetric, and a drifting flip-noise oracle so the joint score does
/// not factor across trajectories.
inline TinyInstance make_tiny_instance(std::uint64_t seed, int N = 2, int T = 2) {
  prm::PrmModel model(tiny_prm_config(seed));
  Rng rng(seed + 17);
  for (const auto& p : model.parameters()) {
    if (p.name == "prm.head2" || p.name == "prm.head2_bias") {
      diffnum::Tensor t = p.tensor;
      for (auto& v : t.mutable_values()) v = 0.8 * rng.normal();
    }
  }
  std::vector<Trajectory> batch;
  std::unordered_map<std::string, int> key;
  for (int n = 0; n < N; ++n) {
    Trajectory t;
    t.id = "tiny-" + std::to_string(n);
    t.problem = "Compute " + std::to_string(n + 2) + " * 3 + 1.";
    for (int s = 1; s <= T; ++s) t.steps.push_back("line " + std::to_string(s) + " of " + std::to_string(n));
    key[t.id] = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T + 1)));
    batch.push_back(std::move(t));
  }
  scorer::SyntheticOracleConfig oc;
  oc.accuracy = 0.8;
  oc.confidence = 0.9;
  oc.drift = 0.3;
  oc.seed = seed;
  estimator::CriticConfig cc;
  cc.history_dim = 6;
  cc.context_dim = model.config().hidden;
  cc.hidden = 8;
  cc.heads = 2;
  cc.seed = seed;
  return TinyInstance{std::move(model), std::move(batch), scorer::SyntheticOracle(oc, key), estimator::Critic(cc),
                      estimator::HistorySummarizer(cc.context_dim, cc.history_dim, seed), scorer::kDefaultRho};
}

struct Configuration {
  std::vector<int> positions;
  double probability = 0.0;
  double reward = 0.0;                // corrected joint score
  estimator::ReturnSeries returns;    // of the per-index rewards
  std::vector<double> baselines;      // exact b_m
  estimator::Rows history;            // h_0..h_{N-1}
  Flat score_function;                // sum_n grad log p(j_n)
  std::vector<Flat> per_index_grads;  // grad log p(j_m) for each m
};

struct Enumeration {
  std::vector<Configuration> configs;
  estimator::Rows context;  // g_1..g_N
  Flat exact_gradient;
  double exact_objective = 0.0;
};

inline void for_each_configuration(const std::vector<Trajectory>& batch,
                                   const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> js(batch.size(), 1);
  while (true) {
    fn(js);
    std::size_t k = 0;
    while (k < js.size() && js[k] == batch[k].num_steps() + 1) js[k++] = 1;
    if (k == js.size()) return;
    ++js[k];
  }
}

inline Enumeration enumerate(TinyInstance& inst) {
  Enumeration e;
  const std::size_t N = inst.batch.size();
  std::vector<FirstErrorDistribution> dists;
  std::vector<std::vector<Flat>> grads(N);
  for (std::size_t n = 0; n < N; ++n) {
    const auto g = inst.model.forward_graph(inst.batch[n]);
    dists.push_back(prm::to_output(g).distribution);
    const auto v = g.final_hidden.values();
    e.context.emplace_back(v.begin(), v.end());
    for (int j = 1; j <= inst.batch[n].num_steps() + 1; ++j) {
      grads[n].push_back(flatten(prm::log_prob_grad(inst.model, inst.batch[n], j)));
    }
  }
  for_each_configuration(inst.batch, [&](const std::vector<int>& js) {
    Configuration c;
    c.positions = js;
    c.probability = 1.0;
    std::vector<FirstErrorPosition> pos;
    for (std::size_t n = 0; n < N; ++n) {
      pos.emplace_back(js[n], inst.batch[n].num_steps());
      c.probability *= dists[n].prob(js[n]);
    }
    const auto joint = scorer::score_joint(inst.oracle, inst.batch, pos, inst.rho);
    c.reward = joint.corrected;
    c.returns = estimator::compute_returns(estimator::joint_rewards(joint.conditional_scores, joint.correction.value));
    for (std::size_t m = 0; m < N; ++m) {
      const std::span<const Trajectory> hist(inst.batch.data(), m);
      const std::span<const FirstErrorPosition> hpos(pos.data(), m);
      const auto cand = scorer::candidate_scores(inst.oracle, hist, hpos, inst.batch[m]);
      const auto rewards = estimator::candidate_rewards(cand, hpos, N, inst.rho);
      c.baselines.push_back(estimator::immediate_baseline(rewards, dists[m].probs()));
    }
    c.history = inst.summarizer.summarize(e.context, pos, joint.conditional_scores);
    c.score_function.assign(grads[0][0].size(), 0.0);
    for (std::size_t n = 0; n < N; ++n) {
      const Flat& g = grads[n][js[n] - 1];
      c.per_index_grads.push_back(g);
      for (std::size_t i = 0; i < g.size(); ++i) c.score_function[i] += g[i];
    }
    e.configs.push_back(std::move(c));
  });
  e.exact_gradient.assign(e.configs.front().score_function.size(), 0.0);
  for (const auto& c : e.configs) {
    e.exact_objective += c.probability * c.reward;
    for (std::size_t i = 0; i < c.score_function.size(); ++i) {
      e.exact_gradient[i] += c.probability * c.reward * c.score_function[i];
    }
  }
  return e;
}

/// Critic predictions V_1..V_N for a configuration, with V_N = 0.
inline std::vector<double> critic_values(const TinyInstance& inst, const Enumeration& e, const Configuration& c) {
  Rng unused(0);
  const diffnum::Tensor t = inst.critic.values(c.history, e.context, false, unused);
  const auto v = t.values();
  std::vector<double> out(v.begin(), v.end());
  out.back() = 0.0;
  return out;
}

enum class Variant { kFull, kPlainReinforce, kConstantBaselines };

/// Estimator value at one configuration.
inline Flat estimator_value(const TinyInstance& inst, const Enumeration& e, const Configuration& c, Variant variant,
                            double constant = 0.0) {
  if (variant == Variant::kPlainReinforce) {
    Flat out = c.score_function;
    for (double& x : out) x *= c.reward;
    return out;
  }
  const std::size_t N = c.positions.size();
  std::vector<double> b = c.baselines, v = critic_values(inst, e, c);
  if (variant == Variant::kConstantBaselines) {
    b.assign(N, constant);
    v.assign(N, 0.7 * constant);
  }
  const auto adv = estimator::compute_advantages(c.returns, b, v);
  Flat out(c.score_function.size(), 0.0);
  for (std::size_t m = 0; m < N; ++m) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += adv[m].total * c.per_index_grads[m][i];
  }
  return out;
}

/// sum_config P(config) * estimator(config): the estimator's exact mean.
inline Flat exact_mean(const TinyInstance& inst, const Enumeration& e, Variant variant, double constant = 0.0) {
  Flat mean(e.exact_gradient.size(), 0.0);
  for (const auto& c : e.configs) {
    const Flat v = estimator_value(inst, e, c, variant, constant);
    for (std::size_t i = 0; i < v.size(); ++i) mean[i] += c.probability * v[i];
  }
  return mean;
}

struct MonteCarloReport {
  Flat mean;
  Flat standard_error;
  double total_variance = 0.0;  // sum of per-component variances
  std::size_t worst_component = 0;
  double worst_z = 0.0;  // max |mean - exact| / se over components with se > 0
  std::size_t exact_mismatches = 0;  // components with se == 0 that differ from exact
};

inline MonteCarloReport monte_carlo(const TinyInstance& inst, const Enumeration& e, Variant variant,
                                    std::size_t samples, std::uint64_t seed) {
  std::vector<Flat> values;
  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& c : e.configs) {
    values.push_back(estimator_value(inst, e, c, variant));
    acc += c.probability;
    cumulative.push_back(acc);
  }
  const std::size_t P = e.exact_gradient.size();
  std::vector<std::size_t> counts(e.configs.size(), 0);
  Rng rng(seed);
  for (std::size_t s = 0; s < samples; ++s) {
    const double u = rng.uniform() * acc;
    std::size_t k = 0;
    while (k + 1 < cumulative.size() && u >= cumulative[k]) ++k;
    ++counts[k];
  }
  MonteCarloReport r;
  r.mean.assign(P, 0.0);
  r.standard_error.assign(P, 0.0);
  const double n = static_cast<double>(samples);
  for (std::size_t i = 0; i < P; ++i) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
      s1 += static_cast<double>(counts[k]) * values[k][i];
      s2 += static_cast<double>(counts[k]) * values[k][i] * values[k][i];
    }
    const double mean = s1 / n;
    const double var = std::max(0.0, s2 / n - mean * mean) * n / (n - 1.0);
    r.mean[i] = mean;
    r.standard_error[i] = std::sqrt(var / n);
    r.total_variance += var;
    const double diff = std::abs(mean - e.exact_gradient[i]);
    if (r.standard_error[i] > 1e-14) {
      const double z = diff / r.standard_error[i];
      if (z > r.worst_z) {
        r.worst_z = z;
        r.worst_component = i;
      }
    } else if (diff > 1e-9) {
      ++r.exact_mismatches;
    }
  }
  return r;
}

/// Regresses the critic onto returns of configurations drawn from p.
/// Returns the critic loss before and after.
inline std::pair<double, double> fit_critic(TinyInstance& inst, const Enumeration& e, int steps, double lr,
                                            std::uint64_t seed) {
  diffnum::AdamW opt(inst.critic.parameters(), {.learning_rate = lr});
  auto exact_loss = [&] {
    double loss = 0.0;
    for (const auto& c : e.configs) {
      loss += c.probability * estimator::critic_loss_value(c.returns, critic_values(inst, e, c));
    }
    return loss;
  };
  const double before = exact_loss();
  Rng rng(seed);
  for (int s = 0; s < steps; ++s) {
    const double u = rng.uniform();
    double acc = 0.0;
    const Configuration* pick = &e.configs.back();
    for (const auto& c : e.configs) {
      acc += c.probability;
      if (u < acc) {
        pick = &c;
        break;
      }
    }
    opt.zero_grad();
    const auto v = inst.critic.values(pick->history, e.context, true, rng);
    estimator::critic_loss(pick->returns, v).backward();
    opt.step();
  }
  return {before, exact_loss()};
}

}  // namespace uprm::testing
