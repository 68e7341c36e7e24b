#pragma once

// Test-time scaling with a PRM as verifier: response-level aggregation,
// Best-of-N, majority voting, a small diverse-verifier tree search, and
// per-step reward export with a softmin accumulated reward.

#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "uprm/core/random.hpp"
#include "uprm/prm/model.hpp"

namespace uprm::evalkit {

enum class AggregationRule { kLast, kProduct, kMin };

const char* aggregation_name(AggregationRule rule) noexcept;
/// "last" | "product" | "min"; throws ConfigError otherwise.
AggregationRule parse_aggregation(const std::string& name);

/// Throws DomainError on an empty list.
double aggregate_response_score(std::span<const double> step_scores, AggregationRule rule = AggregationRule::kLast);

struct Candidate {
  std::vector<std::string> steps;
  std::optional<std::string> final_answer;
  std::optional<std::vector<double>> step_scores;  // r(c_t = 1 | steps <= t)
};

struct CandidateProblem {
  std::string problem_id;
  std::string problem;
  std::optional<std::string> gold_answer;
  std::vector<Candidate> candidates;
};

/// JSONL: {"problem_id", "problem"?, "gold_answer"?, "candidates": [{"steps",
/// "final_answer"?, "step_scores"?}]}. Throws DataError with "source:line".
std::vector<CandidateProblem> parse_candidates(std::istream& in, const std::string& source);
std::vector<CandidateProblem> load_candidates(const std::string& path);
nlohmann::json to_json(const CandidateProblem& p);

/// Fills step_scores from the PRM, which reads each candidate on its own.
void score_candidates(const prm::PrmModel& model, CandidateProblem& problem);

struct CanonicalizeOptions {
  /// Map "0.5", "1/2", "2/4" and "\frac{1}{2}" to one rational form.
  bool numeric = true;
};

/// Trims whitespace, strips \boxed{...} and a trailing period, drops a
/// leading '$' pair, and (optionally) normalizes simple rationals and
/// decimals to "p/q" or an integer. Other math equivalences are not handled.
std::string canonicalize_answer(const std::string& answer, const CanonicalizeOptions& options = {});

/// Index of the highest aggregated score; first occurrence wins ties.
/// Throws DataError for a problem without candidates or without scores.
std::size_t best_of_n(const CandidateProblem& problem, AggregationRule rule = AggregationRule::kLast);

/// Index of the first candidate carrying the most frequent canonical answer.
/// Candidates without an answer do not vote; throws DataError when none has one.
std::size_t majority_vote(const CandidateProblem& problem, const CanonicalizeOptions& options = {});

/// Whether a candidate's answer matches the gold answer after canonicalization.
bool is_correct(const CandidateProblem& problem, const Candidate& candidate, const CanonicalizeOptions& options = {});

/// Share of problems with at least one correct candidate.
double pass_at_n(std::span<const CandidateProblem> problems, const CanonicalizeOptions& options = {});

/// Source of step continuations for tree search.
class StepGenerator {
 public:
  virtual ~StepGenerator() = default;
  /// Up to `count` continuations of `prefix`.
  virtual std::vector<std::string> propose(const std::string& problem, const std::vector<std::string>& prefix,
                                           std::size_t count, Rng& rng) = 0;
  virtual bool is_complete(const std::string& problem, const std::vector<std::string>& prefix) const = 0;
  virtual std::optional<std::string> final_answer(const std::string& problem,
                                                  const std::vector<std::string>& steps) const = 0;
};

/// Arithmetic chains: "Start from <v> and apply <d> operations (seed <s>)."
/// Step k adds a fixed amount derived from the problem text; a sound
/// continuation states the right running value, a flawed one a skewed value
/// that later steps build on. The answer is the last value stated.
class SyntheticTreeGenerator : public StepGenerator {
 public:
  explicit SyntheticTreeGenerator(double flaw_rate = 0.4) : flaw_rate_(flaw_rate) {}

  std::vector<std::string> propose(const std::string& problem, const std::vector<std::string>& prefix,
                                   std::size_t count, Rng& rng) override;
  bool is_complete(const std::string& problem, const std::vector<std::string>& prefix) const override;
  std::optional<std::string> final_answer(const std::string& problem,
                                          const std::vector<std::string>& steps) const override;

  static std::string make_problem(long start, int depth, std::uint64_t seed);
  static std::string correct_answer(const std::string& problem);
  /// Whether a step is the sound continuation of its prefix.
  static bool is_sound(const std::string& problem, const std::vector<std::string>& prefix, const std::string& step);

 private:
  double flaw_rate_;
};

/// Per-step scores for a (problem, steps) pair, e.g. a PRM forward pass.
using StepScorer = std::function<std::vector<double>(const std::string& problem, const std::vector<std::string>& steps)>;

StepScorer prm_step_scorer(const prm::PrmModel& model);

struct DvtsConfig {
  std::size_t width = 4;
  std::size_t beams = 4;
  std::size_t max_depth = 64;
  AggregationRule rule = AggregationRule::kLast;
  std::uint64_t seed = 0;
};

struct DvtsResult {
  std::vector<Candidate> finished;  // pooled over beams, in beam order
  std::size_t selected = 0;
};

/// `beams` independent searches. Each keeps `width` prefixes; every step
/// expands each prefix with `width` proposals and keeps the `width` best by
/// last-step score (first seen wins ties). Completed prefixes leave the
/// search. The pooled finished candidates are ranked by aggregated score.
/// Throws DataError when the generator cannot continue an incomplete prefix
/// or max_depth is reached.
DvtsResult dvts_lite(const std::string& problem, StepGenerator& generator, const StepScorer& scorer,
                     const DvtsConfig& config);

struct StepRewardRecord {
  std::string problem_id;
  std::size_t candidate = 0;
  std::vector<double> rewards;
  double accumulated = 0.0;
};

/// sum_t w_t r_t with w = softmax(-r / temperature). Throws ConfigError
/// unless temperature > 0, DomainError on an empty list.
double softmin_accumulate(std::span<const double> rewards, double temperature);

std::vector<StepRewardRecord> export_step_rewards(const prm::PrmModel& model,
                                                  std::span<const CandidateProblem> problems, double temperature);
nlohmann::json to_json(const StepRewardRecord& r);

}  // namespace uprm::evalkit
