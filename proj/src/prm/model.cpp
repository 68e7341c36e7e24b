#include "uprm/prm/model.hpp"

#include <cmath>

#include "uprm/errors.hpp"

namespace uprm::prm {

using namespace diffnum;

void PrmConfig::validate() const {
  if (hidden == 0 || head_hidden == 0) throw ConfigError("PRM widths must be positive");
  Featurizer check(features);
}

namespace {

Tensor gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor::from_values(rows, cols, std::move(v), true);
}

Tensor copy_param(const Tensor& t) {
  const auto v = t.values();
  return Tensor::from_values(t.rows(), t.cols(), std::vector<double>(v.begin(), v.end()), true);
}

// Rows j = 1..T+1; column t = 1..T. prefix[j][t] = 1[t < j], at[j][t] = 1[t = j].
std::pair<Tensor, Tensor> telescoping_matrices(std::size_t T) {
  std::vector<double> prefix((T + 1) * T, 0.0), at((T + 1) * T, 0.0);
  for (std::size_t j = 0; j <= T; ++j) {
    for (std::size_t t = 0; t < T; ++t) {
      if (t < j) prefix[j * T + t] = 1.0;
      if (t == j) at[j * T + t] = 1.0;
    }
  }
  return {Tensor::from_values(T + 1, T, std::move(prefix)), Tensor::from_values(T + 1, T, std::move(at))};
}

}  // namespace

PrmModel::PrmModel(PrmConfig config) : config_(config), featurizer_(config.features) {
  config_.validate();
  Rng rng(mix64(config_.seed ^ 0x9d3f0a1cULL));
  const std::size_t F = config_.features.dim, H = config_.hidden, K = config_.head_hidden;
  // Inputs are unit-norm, so unit-variance projections give O(1) pre-activations.
  problem_proj_ = gaussian(rng, F, H, 1.0);
  problem_bias_ = Tensor::zeros(1, H, true);
  step_proj_ = gaussian(rng, F, H, 1.0);
  recurrent_ = gaussian(rng, H, H, 1.0 / std::sqrt(static_cast<double>(H)));
  bias_ = Tensor::zeros(1, H, true);
  marker_proj_ = gaussian(rng, H, H, 1.0 / std::sqrt(static_cast<double>(H)));
  marker_embedding_ = gaussian(rng, 1, H, 0.1);
  head1_ = gaussian(rng, H, K, std::sqrt(2.0 / static_cast<double>(H)));
  head1_bias_ = Tensor::zeros(1, K, true);
  head2_ = Tensor::zeros(K, 2, true);
  head2_bias_ = Tensor::zeros(1, 2, true);
}

PrmModel PrmModel::clone() const {
  PrmModel m(*this);
  m.problem_proj_ = copy_param(problem_proj_);
  m.problem_bias_ = copy_param(problem_bias_);
  m.step_proj_ = copy_param(step_proj_);
  m.recurrent_ = copy_param(recurrent_);
  m.bias_ = copy_param(bias_);
  m.marker_proj_ = copy_param(marker_proj_);
  m.marker_embedding_ = copy_param(marker_embedding_);
  m.head1_ = copy_param(head1_);
  m.head1_bias_ = copy_param(head1_bias_);
  m.head2_ = copy_param(head2_);
  m.head2_bias_ = copy_param(head2_bias_);
  return m;
}

ParameterList PrmModel::parameters() const {
  return {{"prm.problem_proj", problem_proj_}, {"prm.problem_bias", problem_bias_},
          {"prm.step_proj", step_proj_},       {"prm.recurrent", recurrent_},
          {"prm.bias", bias_},                 {"prm.marker_proj", marker_proj_},
          {"prm.marker_embedding", marker_embedding_}, {"prm.head1", head1_},
          {"prm.head1_bias", head1_bias_},     {"prm.head2", head2_},
          {"prm.head2_bias", head2_bias_}};
}

PrmModel::Encoded PrmModel::encode(const Trajectory& trajectory) const {
  const std::size_t T = trajectory.steps.size();
  if (T == 0) throw DataError("trajectory '" + trajectory.id + "' has no steps");
  const std::size_t F = config_.features.dim;
  std::vector<std::string_view> texts(trajectory.steps.begin(), trajectory.steps.end());
  const Tensor x = Tensor::from_values(T, F, featurizer_.features(texts));
  const Tensor x0 = Tensor::from_values(1, F, featurizer_.features(trajectory.problem));
  const Tensor projected = matmul(x, step_proj_);  // row t depends on step t only

  Encoded e;
  Tensor z = tanh(add(matmul(x0, problem_proj_), problem_bias_));
  for (std::size_t t = 0; t < T; ++t) {
    z = tanh(add(add(slice_rows(projected, t, t + 1), matmul(z, recurrent_)), bias_));
    e.z.push_back(z);
    e.readout.push_back(tanh(add(matmul(z, marker_proj_), marker_embedding_)));
  }
  return e;
}

PrmGraph PrmModel::forward_graph(const Trajectory& trajectory) const {
  const std::size_t T = trajectory.steps.size();
  const Encoded e = encode(trajectory);
  const Tensor m = concat_rows(e.readout);
  const Tensor logits = add(matmul(relu(add(matmul(m, head1_), head1_bias_)), head2_), head2_bias_);
  // Squash the log-odds into (-L, L), L = logit(1 - eps), so step
  // probabilities never reach the clamp applied when scoring. Close to the
  // identity for moderate odds and keeps a gradient when saturated.
  const double bound = std::log((1.0 - kProbEpsilon) / kProbEpsilon);
  const Tensor odds = scale(tanh(scale(sub(slice_cols(logits, 0, 1), slice_cols(logits, 1, 2)), 1.0 / bound)), bound);
  PrmGraph g;
  g.step_log_probs = log_softmax_rows(concat_cols(odds, Tensor::zeros(T, 1)));
  const auto [prefix, at] = telescoping_matrices(T);
  g.log_p = add(matmul(prefix, slice_cols(g.step_log_probs, 0, 1)), matmul(at, slice_cols(g.step_log_probs, 1, 2)));
  g.entropy = scale(sum(mul(exp(g.log_p), g.log_p)), -1.0);
  g.final_hidden = e.readout.back();
  return g;
}

std::vector<std::vector<double>> PrmModel::hidden_states(const Trajectory& trajectory) const {
  std::vector<std::vector<double>> out;
  for (const auto& z : encode(trajectory).z) out.emplace_back(z.values().begin(), z.values().end());
  return out;
}

PrmOutput to_output(const PrmGraph& graph) {
  const std::size_t T = graph.step_log_probs.rows();
  std::vector<double> step_probs(T);
  for (std::size_t t = 0; t < T; ++t) step_probs[t] = std::exp(graph.step_log_probs.at(t, 0));
  const auto lp = graph.log_p.values();
  PrmOutput out{step_probs, FirstErrorDistribution::from_parts(step_probs, std::vector<double>(lp.begin(), lp.end())),
                graph.entropy.item()};
  return out;
}

FirstErrorPosition sample_position(const FirstErrorDistribution& dist, Rng& rng) {
  const auto p = dist.probs();
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    acc += p[j];
    if (u < acc) return FirstErrorPosition(static_cast<int>(j) + 1, dist.num_steps());
  }
  // Rounding left u above the cumulative total: take the last position with mass.
  for (std::size_t j = p.size(); j-- > 0;) {
    if (p[j] > 0.0) return FirstErrorPosition(static_cast<int>(j) + 1, dist.num_steps());
  }
  return FirstErrorPosition(dist.num_steps() + 1, dist.num_steps());
}

FirstErrorPosition sample_position(const PrmModel& model, const Trajectory& trajectory, Rng& rng) {
  return sample_position(model.forward(trajectory).distribution, rng);
}

void PredictionConfig::validate() const {
  if (rule == PredictionRule::kThreshold && !(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("threshold must lie in (0, 1)");
  }
}

const char* rule_name(PredictionRule rule) noexcept {
  return rule == PredictionRule::kArgmax ? "argmax_j" : "threshold";
}

FirstErrorPosition predict_first_error(const PrmOutput& output, const PredictionConfig& config) {
  config.validate();
  const int T = static_cast<int>(output.step_probs.size());
  if (config.rule == PredictionRule::kArgmax) return FirstErrorPosition(output.distribution.argmax(), T);
  for (int t = 1; t <= T; ++t) {
    if (output.step_probs[t - 1] < config.threshold) return FirstErrorPosition(t, T);
  }
  return FirstErrorPosition(T + 1, T);
}

FirstErrorPosition predict_first_error(const PrmModel& model, const Trajectory& trajectory,
                                       const PredictionConfig& config) {
  return predict_first_error(model.forward(trajectory), config);
}

Tensor supervised_loss(const PrmModel& model, const Trajectory& trajectory, std::optional<int> gold) {
  const auto label = gold ? gold : trajectory.gold_first_error;
  if (!label) throw DataError("supervised loss needs a first-error label for trajectory '" + trajectory.id + "'");
  const FirstErrorPosition j(*label, trajectory.num_steps());
  const PrmGraph g = model.forward_graph(trajectory);
  return scale(element(g.log_p, static_cast<std::size_t>(j.value() - 1), 0), -1.0);
}

std::vector<std::vector<double>> log_prob_grad(const PrmModel& model, const Trajectory& trajectory, int j) {
  const FirstErrorPosition pos(j, trajectory.num_steps());
  const auto params = model.parameters();
  zero_grad(params);
  const PrmGraph g = model.forward_graph(trajectory);
  element(g.log_p, static_cast<std::size_t>(pos.value() - 1), 0).backward();
  std::vector<std::vector<double>> out;
  for (const auto& p : params) {
    const auto grad = p.tensor.grad();
    out.emplace_back(grad.begin(), grad.end());
    if (out.back().empty()) out.back().assign(p.tensor.size(), 0.0);
  }
  zero_grad(params);
  return out;
}

}  // namespace uprm::prm
