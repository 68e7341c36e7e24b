#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "uprm/core/settings.hpp"
#include "uprm/core/trajectory.hpp"
#include "uprm/prm/model.hpp"
#include "uprm/scorer/backend.hpp"
#include "uprm/scorer/chat_client.hpp"
#include "uprm/scorer/synthetic_oracle.hpp"

namespace uprm::trainer {

enum class BackendKind { kOracle, kChat };

struct BackendConfig {
  BackendKind kind = BackendKind::kOracle;
  scorer::SyntheticOracleConfig oracle;
  /// Labeled dataset holding the oracle's answer key.
  std::optional<std::string> answer_key_path;
  scorer::ChatLMConfig chat;
  /// Append-only response cache; none when unset.
  std::optional<std::string> cache_path;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Builds the scorer. The oracle reads its answer key from
/// `answer_key_path`, or from `fallback_key` when no path is set.
std::shared_ptr<scorer::ScorerBackend> make_backend(const BackendConfig& config,
                                                     const TrajectoryDataset* fallback_key = nullptr);

struct CriticSettings {
  std::size_t hidden = 128;
  std::size_t heads = 4;
  std::size_t history_dim = 32;
  double dropout = 0.1;
};

struct TrainConfig {
  double gamma = 3.0;
  double rho = 0.25;
  int step_budget = 80;
  double learning_rate = 1e-3;
  /// Defaults to learning_rate.
  std::optional<double> critic_learning_rate;
  double weight_decay = 0.0;
  int total_updates = 1000;
  int grad_accumulation = 8;
  std::uint64_t seed = 0;
  int checkpoint_interval = 100;  // 0: final checkpoint only
  int log_interval = 10;
  bool diagnostics = false;
  prm::PrmConfig prm;
  CriticSettings critic;
  BackendConfig backend;

  void validate() const;
  double critic_lr() const { return critic_learning_rate.value_or(learning_rate); }

  nlohmann::json to_json() const;
  /// Hash of everything that shapes the update sequence. Update counts,
  /// intervals, diagnostics and paths are left out so a run can be resumed
  /// and extended.
  std::string hash() const;
};

struct SupervisedConfig {
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  int epochs = 5;
  int batch_size = 16;
  std::uint64_t seed = 0;
  prm::PrmConfig prm;

  void validate() const;
  nlohmann::json to_json() const;
};

/// Keys shared by the training commands and the backend.
SettingSchema backend_schema();
SettingSchema prm_schema();
SettingSchema train_schema();       // includes prm + backend keys
SettingSchema supervised_schema();  // includes prm keys

BackendConfig backend_from_settings(const Settings& s);
prm::PrmConfig prm_from_settings(const Settings& s);
TrainConfig train_from_settings(const Settings& s);
SupervisedConfig supervised_from_settings(const Settings& s);

/// Digest of ids and step texts (labels excluded).
std::string dataset_digest(const TrajectoryDataset& ds);

}  // namespace uprm::trainer
