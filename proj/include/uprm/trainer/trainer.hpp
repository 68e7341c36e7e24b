#pragma once

// Unsupervised training loop and the supervised baseline.
//
// One update = grad_accumulation packed batches. For each batch:
//   forward every trajectory, draw j_n ~ p(.|tau_n) in order, score the
//   batch jointly once, compute exact immediate baselines and critic values,
//   and accumulate the gradient of
//     sum_m A_m log p(j_m)  +  gamma / N * sum_n H(p(.|tau_n))
//   (ascent) plus the critic's regression loss. Then one AdamW step for the
//   PRM and one for the critic.
//
// Per-index rewards are S(j_m|j_<m) / N with the correction / N added on the
// last index, so the rewards of a batch sum to its corrected joint score.
// The critic is not asked about the last index: V_N = 0 = G_{N+1}.

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "uprm/core/random.hpp"
#include "uprm/core/trajectory.hpp"
#include "uprm/diffnum/checkpoint.hpp"
#include "uprm/diffnum/optimizer.hpp"
#include "uprm/estimator/critic.hpp"
#include "uprm/estimator/estimator.hpp"
#include "uprm/packer/packer.hpp"
#include "uprm/prm/model.hpp"
#include "uprm/scorer/backend.hpp"
#include "uprm/trainer/config.hpp"

namespace uprm::trainer {

struct UpdateMetrics {
  int update = 0;  // 1-based
  double raw_score = 0.0;        // mean joint score over the update's batches
  double corrected_score = 0.0;
  double entropy = 0.0;          // mean H(p(.|tau)) over trajectories
  double uniform_entropy = 0.0;  // mean ln(T + 1) over the same trajectories
  double critic_loss = 0.0;
  double grad_norm = 0.0;
  double advantage_variance = 0.0;
  int trajectories = 0;
  int corner_fraction_pct = 0;   // share of sampled positions at j = 1 or T + 1
  bool applied = true;           // false when the optimizer skipped the step
  double wall_seconds = 0.0;     // not covered by determinism guarantees

  /// Every field except wall_seconds.
  bool same_trajectory(const UpdateMetrics& o) const;
};

nlohmann::json to_json(const UpdateMetrics& m);
UpdateMetrics update_metrics_from_json(const nlohmann::json& j);
const char* metrics_csv_header();
std::string to_csv_row(const UpdateMetrics& m);

/// Appends metrics as CSV and JSONL; writes the CSV header when the CSV
/// file is new or empty.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& csv, const std::filesystem::path& jsonl);
  void write(const UpdateMetrics& m);

 private:
  std::filesystem::path csv_, jsonl_;
};

/// Seed the trainer hands its packer, so batch streams can be previewed.
std::uint64_t packer_seed(std::uint64_t run_seed) noexcept;

class Trainer {
 public:
  /// Labels in `data` are ignored. Throws ConfigError / DataError.
  Trainer(TrainConfig config, const TrajectoryDataset& data, std::shared_ptr<scorer::ScorerBackend> backend);
  Trainer(const Trainer&) = delete;  // the packer points into data_
  Trainer& operator=(const Trainer&) = delete;

  /// One optimizer update. On a backend failure the trainer rolls back to
  /// the state before the update and rethrows. A non-finite objective
  /// throws NumericError; failed_batch() then describes the batch.
  UpdateMetrics step();

  /// Runs until `updates()` reaches config().total_updates.
  void run(const std::function<void(const UpdateMetrics&)>& on_update = {});

  diffnum::Checkpoint checkpoint() const;
  /// Throws ConfigError when the checkpoint's config hash differs.
  void restore(const diffnum::Checkpoint& checkpoint);

  int updates() const noexcept { return static_cast<int>(history_.size()); }
  const std::vector<UpdateMetrics>& history() const noexcept { return history_; }
  const prm::PrmModel& model() const noexcept { return model_; }
  const estimator::Critic& critic() const noexcept { return critic_; }
  const TrainConfig& config() const noexcept { return config_; }
  /// Config hash combined with the training data digest.
  std::string run_hash() const;

  /// Per-batch estimator diagnostics as JSONL when set.
  void set_diagnostics_sink(std::ostream* out) { diagnostics_ = out; }
  const nlohmann::json& failed_batch() const noexcept { return failed_batch_; }

  /// Sets total_updates, e.g. to extend a resumed run.
  void set_total_updates(int n);

 private:
  struct BatchResult {
    double raw = 0.0, corrected = 0.0, critic_loss = 0.0;
    double entropy_sum = 0.0, uniform_sum = 0.0;
    int corners = 0;
    std::vector<double> advantages;
  };
  BatchResult process_batch(const packer::PackedBatch& batch, double weight);

  struct Snapshot {
    Rng sample_rng, dropout_rng;
    packer::PackerState packer;
  };

  TrainConfig config_;
  TrajectoryDataset data_;
  std::shared_ptr<scorer::ScorerBackend> backend_;
  prm::PrmModel model_;
  estimator::Critic critic_;
  estimator::HistorySummarizer summarizer_;
  diffnum::AdamW prm_opt_, critic_opt_;
  packer::Packer packer_;
  Rng sample_rng_, dropout_rng_;
  std::vector<UpdateMetrics> history_;
  std::ostream* diagnostics_ = nullptr;
  nlohmann::json failed_batch_;
};

struct EntropySummary {
  double mean_entropy = 0.0;
  double mean_uniform = 0.0;  // mean ln(T + 1)
  double fraction() const { return mean_uniform > 0.0 ? mean_entropy / mean_uniform : 0.0; }
};

EntropySummary summarize_entropy(const prm::PrmModel& model, const TrajectoryDataset& data);

struct SupervisedEpoch {
  int epoch = 0;
  double mean_loss = 0.0;
  int updates = 0;
};

struct SupervisedResult {
  prm::PrmModel model;
  std::vector<SupervisedEpoch> epochs;
};

/// Minimizes the mean of -log p(gold) over shuffled mini-batches. Throws
/// DataError when a trajectory lacks a label.
SupervisedResult train_supervised(const SupervisedConfig& config, const TrajectoryDataset& labeled,
                                  const std::function<void(const SupervisedEpoch&)>& on_epoch = {});

struct SweepRun {
  double gamma = 0.0;
  std::vector<UpdateMetrics> metrics;
  EntropySummary final_entropy;
};

/// One full training run per gamma, everything else fixed.
std::vector<SweepRun> sweep_gamma(const TrainConfig& base, const std::vector<double>& gammas,
                                  const TrajectoryDataset& data,
                                  const std::function<std::shared_ptr<scorer::ScorerBackend>()>& make_backend,
                                  const std::function<void(double, const UpdateMetrics&)>& on_update = {});

}  // namespace uprm::trainer
