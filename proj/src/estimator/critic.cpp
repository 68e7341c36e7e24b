#include "uprm/estimator/critic.hpp"

#include <cmath>
#include <string>

#include "uprm/errors.hpp"

namespace uprm::estimator {

using namespace diffnum;

void CriticConfig::validate() const {
  if (history_dim == 0 || context_dim == 0 || hidden == 0 || heads == 0) {
    throw ConfigError("critic widths must be positive");
  }
  if (hidden % heads != 0) {
    throw ConfigError("critic hidden width " + std::to_string(hidden) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("critic dropout must lie in [0, 1)");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("critic layer-norm eps must be positive");
}

namespace {

Tensor gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor::from_values(rows, cols, std::move(v), true);
}

Tensor stack(const Rows& rows, std::size_t width, const char* what) {
  if (rows.empty()) throw DomainError(std::string("critic needs at least one ") + what + " row");
  std::vector<double> flat;
  flat.reserve(rows.size() * width);
  for (const auto& r : rows) {
    if (r.size() != width) {
      throw DomainError(std::string("critic ") + what + " row has width " + std::to_string(r.size()) + ", expected " +
                        std::to_string(width));
    }
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return Tensor::from_values(rows.size(), width, std::move(flat));
}

}  // namespace

Critic::Critic(CriticConfig config) : config_(config) {
  config_.validate();
  Rng rng(mix64(config_.seed ^ 0x5c2a7e11ULL));
  const std::size_t Dh = config_.history_dim, Dg = config_.context_dim, D = config_.hidden;
  // Inputs are layer-normalized, so 1/sqrt(fan_in) keeps projections O(1).
  w_q_ = gaussian(rng, Dh, D, 1.0 / std::sqrt(static_cast<double>(Dh)));
  w_k_ = gaussian(rng, Dg, D, 1.0 / std::sqrt(static_cast<double>(Dg)));
  w_v_ = gaussian(rng, Dg, D, 1.0 / std::sqrt(static_cast<double>(Dg)));
  w_o_ = gaussian(rng, D, D, 1.0 / std::sqrt(static_cast<double>(D)));
  mlp1_ = gaussian(rng, Dh + D, D, std::sqrt(2.0 / static_cast<double>(Dh + D)));
  mlp1_bias_ = Tensor::zeros(1, D, true);
  mlp2_ = Tensor::zeros(D, 1, true);
  mlp2_bias_ = Tensor::zeros(1, 1, true);
}

ParameterList Critic::parameters() const {
  return {{"critic.query", w_q_},     {"critic.key", w_k_},        {"critic.value", w_v_},
          {"critic.output", w_o_},    {"critic.mlp1", mlp1_},      {"critic.mlp1_bias", mlp1_bias_},
          {"critic.mlp2", mlp2_},     {"critic.mlp2_bias", mlp2_bias_}};
}

Tensor Critic::heads_output(const Tensor& h, const Tensor& g, std::vector<Tensor>* weights) const {
  const std::size_t D = config_.hidden, nh = config_.heads, dh = D / nh;
  const Tensor q = matmul(h, w_q_);
  const Tensor k = matmul(g, w_k_);
  const Tensor v = matmul(g, w_v_);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out;
  for (std::size_t head = 0; head < nh; ++head) {
    const Tensor qh = slice_cols(q, head * dh, (head + 1) * dh);
    const Tensor kh = slice_cols(k, head * dh, (head + 1) * dh);
    const Tensor vh = slice_cols(v, head * dh, (head + 1) * dh);
    const Tensor alpha = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
    if (weights) weights->push_back(alpha);
    const Tensor ctx = matmul(alpha, vh);
    out = out.defined() ? concat_cols(out, ctx) : ctx;
  }
  return out;
}

Tensor Critic::values(const Rows& history, const Rows& context, bool training, Rng& rng) const {
  const double eps = config_.layer_norm_eps;
  const Tensor h = layer_norm_rows(stack(history, config_.history_dim, "history"), eps);
  const Tensor g = layer_norm_rows(stack(context, config_.context_dim, "context"), eps);
  const Tensor attended = matmul(heads_output(h, g, nullptr), w_o_);
  const Tensor c = layer_norm_rows(dropout(attended, config_.dropout, rng, training), eps);
  const Tensor hidden = gelu(add(matmul(concat_cols(h, c), mlp1_), mlp1_bias_));
  return add(matmul(hidden, mlp2_), mlp2_bias_);
}

Tensor Critic::value(const std::vector<double>& h_prev, const Rows& context, bool training, Rng& rng) const {
  return values(Rows{h_prev}, context, training, rng);
}

std::vector<std::vector<double>> Critic::attention(const std::vector<double>& h_prev, const Rows& context) const {
  const double eps = config_.layer_norm_eps;
  const Tensor h = layer_norm_rows(stack(Rows{h_prev}, config_.history_dim, "history"), eps);
  const Tensor g = layer_norm_rows(stack(context, config_.context_dim, "context"), eps);
  std::vector<Tensor> weights;
  heads_output(h, g, &weights);
  std::vector<std::vector<double>> out;
  for (const auto& w : weights) out.emplace_back(w.values().begin(), w.values().end());
  return out;
}

HistorySummarizer::HistorySummarizer(std::size_t context_dim, std::size_t history_dim, std::uint64_t seed)
    : context_dim_(context_dim), history_dim_(history_dim) {
  if (context_dim == 0 || history_dim == 0) throw ConfigError("summarizer widths must be positive");
  Rng rng(mix64(seed ^ 0x13e5b7c9ULL));
  const std::size_t in = context_dim + 4;
  const double sa = 0.9 / std::sqrt(static_cast<double>(history_dim));
  const double sb = 1.0 / std::sqrt(static_cast<double>(in));
  h0_.resize(history_dim);
  bias_.resize(history_dim);
  for (auto& x : h0_) x = std::tanh(rng.normal());
  for (auto& x : bias_) x = 0.1 * rng.normal();
  a_.resize(history_dim * history_dim);
  b_.resize(in * history_dim);
  for (auto& x : a_) x = sa * rng.normal();
  for (auto& x : b_) x = sb * rng.normal();
}

Rows HistorySummarizer::summarize(const Rows& context, std::span<const FirstErrorPosition> positions,
                                  std::span<const double> scores) const {
  const std::size_t n = context.size();
  if (positions.size() != n || scores.size() != n) throw DomainError("summarizer inputs misaligned");
  Rows out;
  out.reserve(n);
  std::vector<double> h = h0_;
  out.push_back(h);
  const std::size_t in = context_dim_ + 4;
  std::vector<double> u(in);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (context[i].size() != context_dim_) throw DomainError("summarizer context width mismatch");
    std::copy(context[i].begin(), context[i].end(), u.begin());
    const auto& j = positions[i];
    u[context_dim_] = static_cast<double>(j.value()) / static_cast<double>(j.num_steps() + 1);
    u[context_dim_ + 1] = j.is_first() ? 1.0 : 0.0;
    u[context_dim_ + 2] = j.is_no_error() ? 1.0 : 0.0;
    u[context_dim_ + 3] = scores[i];
    std::vector<double> next(bias_);
    for (std::size_t r = 0; r < history_dim_; ++r) {
      for (std::size_t c = 0; c < history_dim_; ++c) next[c] += h[r] * a_[r * history_dim_ + c];
    }
    for (std::size_t r = 0; r < in; ++r) {
      if (u[r] == 0.0) continue;
      for (std::size_t c = 0; c < history_dim_; ++c) next[c] += u[r] * b_[r * history_dim_ + c];
    }
    for (auto& x : next) x = std::tanh(x);
    h = std::move(next);
    out.push_back(h);
  }
  return out;
}

}  // namespace uprm::estimator
