#pragma once

// Desk-scale process reward model.
//
//   x_0 = features(problem), x_t = features(step t)
//   z_0 = tanh(x_0 W_p + b_p)
//   z_t = tanh(x_t W_x + z_{t-1} W_h + b)            causal recurrence
//   m_t = tanh(z_t W_m + e_*)                        [*] readout, e_* trainable
//   l_t = relu(m_t W_1 + c_1) W_2 + c_2              two logits per step
//   log r_t = log_softmax(l_t); column 0 is "correct"
//
// log p(j) is assembled from log r with constant 0/1 matrices so that the
// whole first-error distribution stays differentiable. W_2 and c_2 start at
// zero, so an untrained model gives r_t = 0.5 everywhere.

#include <cstdint>
#include <optional>
#include <vector>

#include "uprm/core/first_error.hpp"
#include "uprm/core/random.hpp"
#include "uprm/core/trajectory.hpp"
#include "uprm/diffnum/tensor.hpp"
#include "uprm/prm/featurizer.hpp"

namespace uprm::prm {

using diffnum::ParameterList;
using diffnum::Tensor;

struct PrmConfig {
  FeaturizerConfig features;
  std::size_t hidden = 128;
  std::size_t head_hidden = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Differentiable forward results for one trajectory.
struct PrmGraph {
  Tensor step_log_probs;  // [T x 2], log r(c_t = 1), log r(c_t = 0)
  Tensor log_p;           // [(T+1) x 1], log p(j) for j = 1..T+1
  Tensor entropy;         // [1 x 1]
  Tensor final_hidden;    // [1 x H], readout at the last step
};

struct PrmOutput {
  std::vector<double> step_probs;  // r(c_t = 1 | steps <= t)
  FirstErrorDistribution distribution;
  double entropy = 0.0;
};

PrmOutput to_output(const PrmGraph& graph);

class PrmModel {
 public:
  explicit PrmModel(PrmConfig config = {});

  PrmGraph forward_graph(const Trajectory& trajectory) const;
  PrmOutput forward(const Trajectory& trajectory) const { return to_output(forward_graph(trajectory)); }

  /// z_1..z_T as plain rows.
  std::vector<std::vector<double>> hidden_states(const Trajectory& trajectory) const;

  ParameterList parameters() const;
  const PrmConfig& config() const noexcept { return config_; }
  const Featurizer& featurizer() const noexcept { return featurizer_; }

  /// Deep copy with independent parameter storage.
  PrmModel clone() const;

 private:
  struct Encoded {
    std::vector<Tensor> z;        // z_1..z_T
    std::vector<Tensor> readout;  // m_1..m_T
  };
  Encoded encode(const Trajectory& trajectory) const;

  PrmConfig config_;
  Featurizer featurizer_;
  Tensor problem_proj_, problem_bias_;
  Tensor step_proj_, recurrent_, bias_;
  Tensor marker_proj_, marker_embedding_;
  Tensor head1_, head1_bias_, head2_, head2_bias_;
};

/// Draws j ~ p(j). Uses one uniform from `rng`.
FirstErrorPosition sample_position(const FirstErrorDistribution& dist, Rng& rng);
FirstErrorPosition sample_position(const PrmModel& model, const Trajectory& trajectory, Rng& rng);

enum class PredictionRule { kArgmax, kThreshold };

struct PredictionConfig {
  PredictionRule rule = PredictionRule::kArgmax;
  double threshold = 0.5;

  void validate() const;
};

const char* rule_name(PredictionRule rule) noexcept;

/// kArgmax: lowest-index argmax of p(j). kThreshold: first t with
/// r(c_t = 1) < threshold, else T + 1.
FirstErrorPosition predict_first_error(const PrmOutput& output, const PredictionConfig& config = {});
FirstErrorPosition predict_first_error(const PrmModel& model, const Trajectory& trajectory,
                                       const PredictionConfig& config = {});

/// -log p(j = gold | trajectory). Throws DataError without a label.
Tensor supervised_loss(const PrmModel& model, const Trajectory& trajectory,
                       std::optional<int> gold = std::nullopt);

/// Gradient of log p(j | trajectory) for every parameter, in parameters()
/// order. Parameter gradients are left zeroed.
std::vector<std::vector<double>> log_prob_grad(const PrmModel& model, const Trajectory& trajectory, int j);

}  // namespace uprm::prm
