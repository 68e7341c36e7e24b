#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "uprm/diffnum/tensor.hpp"

namespace uprm::diffnum {

enum class NonFinitePolicy { kSkip, kThrow };

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  NonFinitePolicy on_non_finite = NonFinitePolicy::kSkip;
};

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

struct StepOutcome {
  bool applied = true;
  std::string skipped_reason;
};

/// Adam with decoupled weight decay. Minimizes: parameters move against
/// their accumulated gradients.
class AdamW {
 public:
  AdamW(ParameterList params, AdamWConfig config);

  StepOutcome step();
  void zero_grad() const { diffnum::zero_grad(params_); }

  const AdamWConfig& config() const noexcept { return config_; }
  const OptimizerState& state() const noexcept { return state_; }
  const ParameterList& parameters() const noexcept { return params_; }

  nlohmann::json state_to_json() const;
  /// Throws DataError when moment shapes do not match the parameters.
  void load_state(const nlohmann::json& j);

 private:
  ParameterList params_;
  AdamWConfig config_;
  OptimizerState state_;
};

}  // namespace uprm::diffnum
