#include "uprm/evalkit/localization.hpp"

#include "uprm/errors.hpp"
#include "uprm/scorer/score.hpp"

namespace uprm::evalkit {

double f1_score(double e, double c) {
  if (e + c <= 0.0) return 0.0;
  return 2.0 * e * c / (e + c);
}

namespace {

void tally(LocalizationCounts& counts, const FirstErrorPosition& pred, const FirstErrorPosition& gold) {
  if (gold.is_no_error()) {
    ++counts.correct;
    counts.correct_hits += pred.is_no_error() ? 1 : 0;
  } else {
    ++counts.erroneous;
    counts.erroneous_hits += pred.value() == gold.value() ? 1 : 0;
  }
}

double ratio(std::size_t hits, std::size_t n) { return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n); }

nlohmann::json counts_json(const LocalizationCounts& c) {
  const double e = ratio(c.erroneous_hits, c.erroneous), k = ratio(c.correct_hits, c.correct);
  return {{"erroneous", c.erroneous}, {"erroneous_hits", c.erroneous_hits}, {"correct", c.correct},
          {"correct_hits", c.correct_hits}, {"accuracy_on_erroneous", e}, {"accuracy_on_correct", k},
          {"f1", f1_score(e, k)}};
}

}  // namespace

LocalizationReport localization_metrics(std::span<const FirstErrorPosition> predictions,
                                        std::span<const FirstErrorPosition> golds, std::string rule) {
  return localization_metrics(predictions, golds, {}, std::move(rule));
}

LocalizationReport localization_metrics(std::span<const FirstErrorPosition> predictions,
                                        std::span<const FirstErrorPosition> golds,
                                        std::span<const std::string> groups, std::string rule) {
  if (predictions.size() != golds.size()) {
    throw DomainError("got " + std::to_string(predictions.size()) + " predictions for " +
                      std::to_string(golds.size()) + " gold labels");
  }
  if (!groups.empty() && groups.size() != golds.size()) throw DomainError("group list does not match the labels");
  LocalizationReport r;
  r.rule = std::move(rule);
  for (std::size_t i = 0; i < golds.size(); ++i) {
    if (predictions[i].num_steps() != golds[i].num_steps()) {
      throw DomainError("prediction " + std::to_string(i) + " refers to a trajectory of a different length");
    }
    tally(r.counts, predictions[i], golds[i]);
    if (!groups.empty()) tally(r.per_dataset[groups[i]], predictions[i], golds[i]);
  }
  r.accuracy_on_erroneous = ratio(r.counts.erroneous_hits, r.counts.erroneous);
  r.accuracy_on_correct = ratio(r.counts.correct_hits, r.counts.correct);
  r.f1 = f1_score(r.accuracy_on_erroneous, r.accuracy_on_correct);
  return r;
}

nlohmann::json to_json(const LocalizationReport& r) {
  nlohmann::json j = counts_json(r.counts);
  j["rule"] = r.rule;
  if (!r.per_dataset.empty()) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [name, c] : r.per_dataset) per[name] = counts_json(c);
    j["per_dataset"] = per;
  }
  return j;
}

int argmax_position(std::span<const double> scores) {
  if (scores.empty()) throw DomainError("argmax over an empty score list");
  std::size_t best = 0;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    if (scores[j] > scores[best]) best = j;
  }
  return static_cast<int>(best) + 1;
}

FirstErrorPosition judge_argmax(scorer::ScorerBackend& backend, const Trajectory& trajectory,
                                const scorer::PromptTemplate& tmpl) {
  const int T = trajectory.num_steps();
  std::vector<double> scores;
  for (int j = 1; j <= T + 1; ++j) {
    scores.push_back(scorer::score_single(backend, trajectory, FirstErrorPosition(j, T), tmpl).value);
  }
  return FirstErrorPosition(argmax_position(scores), T);
}

namespace {

std::vector<FirstErrorPosition> golds_of(const TrajectoryDataset& ds) {
  std::vector<FirstErrorPosition> golds;
  for (const auto& t : ds.trajectories) {
    if (!t.gold_first_error) throw DataError("trajectory '" + t.id + "' has no first-error label");
    golds.emplace_back(*t.gold_first_error, t.num_steps());
  }
  return golds;
}

}  // namespace

LocalizationRun evaluate_prm(const prm::PrmModel& model, const TrajectoryDataset& labeled,
                             const prm::PredictionConfig& rule) {
  const auto golds = golds_of(labeled);
  LocalizationRun run;
  for (const auto& t : labeled.trajectories) run.predictions.push_back(prm::predict_first_error(model, t, rule));
  run.report = localization_metrics(run.predictions, golds, prm::rule_name(rule.rule));
  return run;
}

LocalizationRun evaluate_judge(scorer::ScorerBackend& backend, const TrajectoryDataset& labeled,
                               const scorer::PromptTemplate& tmpl) {
  const auto golds = golds_of(labeled);
  LocalizationRun run;
  for (const auto& t : labeled.trajectories) run.predictions.push_back(judge_argmax(backend, t, tmpl));
  run.report = localization_metrics(run.predictions, golds, "judge_argmax");
  return run;
}

}  // namespace uprm::evalkit
