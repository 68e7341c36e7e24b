#pragma once

// First-error localization: accuracy on erroneous trajectories (exact index
// match), accuracy on correct ones (predicting T + 1), and their harmonic
// mean.

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "uprm/core/trajectory.hpp"
#include "uprm/prm/model.hpp"
#include "uprm/scorer/backend.hpp"
#include "uprm/scorer/conversation.hpp"

namespace uprm::evalkit {

/// 2ec / (e + c), or 0 when e + c = 0.
double f1_score(double accuracy_erroneous, double accuracy_correct);

struct LocalizationCounts {
  std::size_t erroneous = 0, erroneous_hits = 0;
  std::size_t correct = 0, correct_hits = 0;
};

struct LocalizationReport {
  double accuracy_on_erroneous = 0.0;
  double accuracy_on_correct = 0.0;
  double f1 = 0.0;
  LocalizationCounts counts;
  std::string rule;
  std::map<std::string, LocalizationCounts> per_dataset;
};

/// Throws DomainError when the lists differ in length or a prediction and
/// its gold disagree on T.
LocalizationReport localization_metrics(std::span<const FirstErrorPosition> predictions,
                                        std::span<const FirstErrorPosition> golds, std::string rule = "");

/// Adds a per-dataset breakdown; `groups[i]` names the dataset of item i.
LocalizationReport localization_metrics(std::span<const FirstErrorPosition> predictions,
                                        std::span<const FirstErrorPosition> golds,
                                        std::span<const std::string> groups, std::string rule);

nlohmann::json to_json(const LocalizationReport& r);

/// argmax_j of the single-trajectory score over j = 1..T+1, lowest index on
/// ties. One score_single call per candidate.
FirstErrorPosition judge_argmax(scorer::ScorerBackend& backend, const Trajectory& trajectory,
                                const scorer::PromptTemplate& tmpl = {});

/// argmax over a precomputed score list (1-based result).
int argmax_position(std::span<const double> scores);

struct LocalizationRun {
  std::vector<FirstErrorPosition> predictions;
  LocalizationReport report;
};

/// Golds come from the dataset labels; throws DataError when one is missing.
LocalizationRun evaluate_prm(const prm::PrmModel& model, const TrajectoryDataset& labeled,
                             const prm::PredictionConfig& rule = {});
LocalizationRun evaluate_judge(scorer::ScorerBackend& backend, const TrajectoryDataset& labeled,
                               const scorer::PromptTemplate& tmpl = {});

}  // namespace uprm::evalkit
