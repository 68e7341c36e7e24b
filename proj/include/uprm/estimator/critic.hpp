#pragma once

// Cross-attention critic V(j_<m).
//
//   H = LN([h_0 .. h_{N-1}])      history states, row m-1 feeds V_m
//   G = LN([g_1 .. g_N])          privileged per-trajectory context
//   per head: a = softmax((H W_q)(G W_k)^T / sqrt(d_head)),  a (G W_v)
//   C = LN(dropout(concat(heads) W_o))
//   V = W_2 gelu([H ; C] W_1 + b_1) + b_2
//
// Inputs are plain values, so nothing flows back into h or g. Row m of the
// output depends on h_{m-1} and on all of G only. W_2 and b_2 start at zero,
// so an untrained critic predicts 0.

#include <cstdint>
#include <span>
#include <vector>

#include "uprm/core/first_error.hpp"
#include "uprm/core/random.hpp"
#include "uprm/diffnum/tensor.hpp"

namespace uprm::estimator {

using diffnum::ParameterList;
using diffnum::Tensor;

using Rows = std::vector<std::vector<double>>;

struct CriticConfig {
  std::size_t history_dim = 32;
  std::size_t context_dim = 128;
  std::size_t hidden = 128;
  std::size_t heads = 4;
  double dropout = 0.1;
  double layer_norm_eps = 1e-5;
  std::uint64_t seed = 0;

  void validate() const;
};

class Critic {
 public:
  explicit Critic(CriticConfig config = {});

  /// V_1..V_N as an N x 1 graph. `history` holds h_0..h_{N-1}, `context`
  /// holds g_1..g_N. Dropout draws from `rng` when training.
  Tensor values(const Rows& history, const Rows& context, bool training, Rng& rng) const;

  /// V_m alone (m in 1..N); same numbers as row m-1 of values().
  Tensor value(const std::vector<double>& h_prev, const Rows& context, bool training, Rng& rng) const;

  /// Attention weights of every head for one query row, [heads x N].
  std::vector<std::vector<double>> attention(const std::vector<double>& h_prev, const Rows& context) const;

  ParameterList parameters() const;
  const CriticConfig& config() const noexcept { return config_; }

 private:
  Tensor heads_output(const Tensor& h, const Tensor& g, std::vector<Tensor>* weights) const;

  CriticConfig config_;
  Tensor w_q_, w_k_, w_v_, w_o_;
  Tensor mlp1_, mlp1_bias_, mlp2_, mlp2_bias_;
};

/// Fixed (untrained), seeded recurrent digest standing in for the judge's
/// hidden state after each marked sequence:
///   h_0 = tanh(c_0)
///   h_n = tanh(h_{n-1} A + u_n B + c),  u_n = [g_n; j_n/(T_n+1); 1[j_n=1]; 1[j_n=T_n+1]; S_n]
class HistorySummarizer {
 public:
  HistorySummarizer(std::size_t context_dim, std::size_t history_dim, std::uint64_t seed);

  /// h_0..h_{N-1} for a batch of N; the final state h_N is never needed.
  Rows summarize(const Rows& context, std::span<const FirstErrorPosition> positions,
                 std::span<const double> scores) const;

  std::vector<double> initial() const { return h0_; }
  std::size_t history_dim() const noexcept { return history_dim_; }
  std::size_t context_dim() const noexcept { return context_dim_; }

 private:
  std::size_t context_dim_, history_dim_;
  std::vector<double> h0_, bias_;
  std::vector<double> a_, b_;  // row-major
};

}  // namespace uprm::estimator
