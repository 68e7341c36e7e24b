#include "uprm/diffnum/optimizer.hpp"

#include <cmath>

#include "uprm/errors.hpp"

namespace uprm::diffnum {

AdamW::AdamW(ParameterList params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate >= 0.0) || !(config_.weight_decay >= 0.0) || !(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
      !(config_.beta2 >= 0.0 && config_.beta2 < 1.0) || !(config_.epsilon > 0.0)) {
    throw ConfigError("invalid AdamW hyperparameters");
  }
  for (const auto& p : params_) {
    state_.first_moment.emplace_back(p.tensor.size(), 0.0);
    state_.second_moment.emplace_back(p.tensor.size(), 0.0);
  }
}

StepOutcome AdamW::step() {
  for (const auto& p : params_) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        const std::string reason = "non-finite gradient in '" + p.name + "'";
        if (config_.on_non_finite == NonFinitePolicy::kThrow) throw NumericError(reason);
        return {false, reason};
      }
    }
  }
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);
  const double lr = config_.learning_rate;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor w = params_[k].tensor;
    auto values = w.mutable_values();
    const auto grad = w.grad();
    auto& m = state_.first_moment[k];
    auto& v = state_.second_moment[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      values[i] -= lr * (m_hat / (std::sqrt(v_hat) + config_.epsilon) + config_.weight_decay * values[i]);
    }
  }
  return {};
}

nlohmann::json AdamW::state_to_json() const {
  return {{"step", state_.step}, {"first_moment", state_.first_moment}, {"second_moment", state_.second_moment}};
}

void AdamW::load_state(const nlohmann::json& j) {
  OptimizerState s;
  try {
    s.step = j.at("step").get<std::uint64_t>();
    s.first_moment = j.at("first_moment").get<std::vector<std::vector<double>>>();
    s.second_moment = j.at("second_moment").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("optimizer state: ") + e.what());
  }
  if (s.first_moment.size() != params_.size() || s.second_moment.size() != params_.size()) {
    throw DataError("optimizer state has the wrong number of parameters");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (s.first_moment[k].size() != params_[k].tensor.size() || s.second_moment[k].size() != params_[k].tensor.size()) {
      throw DataError("optimizer moment shape mismatch for '" + params_[k].name + "'");
    }
  }
  state_ = std::move(s);
}

}  // namespace uprm::diffnum
