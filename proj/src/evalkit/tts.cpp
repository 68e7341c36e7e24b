#include "uprm/evalkit/tts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <regex>
#include <unordered_map>

#include "uprm/errors.hpp"

namespace uprm::evalkit {

const char* aggregation_name(AggregationRule rule) noexcept {
  switch (rule) {
    case AggregationRule::kLast:
      return "last";
    case AggregationRule::kProduct:
      return "product";
    case AggregationRule::kMin:
      return "min";
  }
  return "last";
}

AggregationRule parse_aggregation(const std::string& name) {
  if (name == "last") return AggregationRule::kLast;
  if (name == "product") return AggregationRule::kProduct;
  if (name == "min") return AggregationRule::kMin;
  throw ConfigError("aggregation must be last, product or min, got '" + name + "'");
}

double aggregate_response_score(std::span<const double> s, AggregationRule rule) {
  if (s.empty()) throw DomainError("cannot aggregate an empty score list");
  switch (rule) {
    case AggregationRule::kLast:
      return s.back();
    case AggregationRule::kProduct:
      return std::accumulate(s.begin(), s.end(), 1.0, std::multiplies<>());
    case AggregationRule::kMin:
      return *std::min_element(s.begin(), s.end());
  }
  return s.back();
}

// ---- candidate files ------------------------------------------------------

namespace {

Candidate candidate_from_json(const nlohmann::json& j) {
  Candidate c;
  c.steps = j.at("steps").get<std::vector<std::string>>();
  if (c.steps.empty()) throw DataError("candidate has no steps");
  if (j.contains("final_answer") && !j["final_answer"].is_null()) c.final_answer = j["final_answer"].get<std::string>();
  if (j.contains("step_scores") && !j["step_scores"].is_null()) {
    c.step_scores = j["step_scores"].get<std::vector<double>>();
    if (c.step_scores->size() != c.steps.size()) throw DataError("step_scores length differs from the step count");
  }
  return c;
}

}  // namespace

std::vector<CandidateProblem> parse_candidates(std::istream& in, const std::string& source) {
  std::vector<CandidateProblem> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(number);
    try {
      const auto j = nlohmann::json::parse(line);
      CandidateProblem p;
      p.problem_id = j.at("problem_id").is_string() ? j["problem_id"].get<std::string>() : j["problem_id"].dump();
      p.problem = j.value("problem", std::string());
      if (j.contains("gold_answer") && !j["gold_answer"].is_null()) p.gold_answer = j["gold_answer"].get<std::string>();
      for (const auto& c : j.at("candidates")) p.candidates.push_back(candidate_from_json(c));
      if (p.candidates.empty()) throw DataError("problem has no candidates");
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return out;
}

std::vector<CandidateProblem> load_candidates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open candidate file " + path);
  return parse_candidates(in, path);
}

nlohmann::json to_json(const CandidateProblem& p) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : p.candidates) {
    nlohmann::json j{{"steps", c.steps}};
    if (c.final_answer) j["final_answer"] = *c.final_answer;
    if (c.step_scores) j["step_scores"] = *c.step_scores;
    cands.push_back(j);
  }
  nlohmann::json j{{"problem_id", p.problem_id}, {"candidates", cands}};
  if (!p.problem.empty()) j["problem"] = p.problem;
  if (p.gold_answer) j["gold_answer"] = *p.gold_answer;
  return j;
}

void score_candidates(const prm::PrmModel& model, CandidateProblem& problem) {
  for (std::size_t i = 0; i < problem.candidates.size(); ++i) {
    auto& c = problem.candidates[i];
    Trajectory t{problem.problem_id + "#" + std::to_string(i), problem.problem, c.steps, std::nullopt, c.final_answer};
    c.step_scores = model.forward(t).step_probs;
  }
}

// ---- answers --------------------------------------------------------------

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_digits(const std::string& s, long long& out) {
  if (s.empty() || s.size() > 18) return false;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  out = std::stoll(s);
  return true;
}

// sign? digits (. digits)? | sign? digits / digits
std::optional<std::pair<long long, long long>> parse_rational(std::string s) {
  bool negative = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    negative = s[0] == '-';
    s = s.substr(1);
  }
  long long p = 0, q = 1;
  if (const auto slash = s.find('/'); slash != std::string::npos) {
    if (!parse_digits(s.substr(0, slash), p) || !parse_digits(s.substr(slash + 1), q) || q == 0) return std::nullopt;
  } else if (const auto dot = s.find('.'); dot != std::string::npos) {
    long long whole = 0, frac = 0;
    const std::string w = s.substr(0, dot), f = s.substr(dot + 1);
    if (w.empty() && f.empty()) return std::nullopt;
    if (!w.empty() && !parse_digits(w, whole)) return std::nullopt;
    if (!f.empty() && !parse_digits(f, frac)) return std::nullopt;
    if (w.size() + f.size() > 18) return std::nullopt;
    for (std::size_t i = 0; i < f.size(); ++i) q *= 10;
    p = whole * q + frac;
  } else if (!parse_digits(s, p)) {
    return std::nullopt;
  }
  const long long g = std::gcd(p, q);
  p /= g;
  q /= g;
  return std::make_pair(negative && p != 0 ? -p : p, q);
}

}  // namespace

std::string canonicalize_answer(const std::string& answer, const CanonicalizeOptions& options) {
  std::string s = trim(answer);
  if (s.size() >= 2 && s.front() == '$' && s.back() == '$') s = trim(s.substr(1, s.size() - 2));
  static const std::string kBoxed = "\\boxed{";
  if (s.rfind(kBoxed, 0) == 0 && !s.empty() && s.back() == '}') s = trim(s.substr(kBoxed.size(), s.size() - kBoxed.size() - 1));
  while (!s.empty() && s.back() == '.') s.pop_back();
  s = trim(s);
  if (!options.numeric) return s;

  static const std::regex frac(R"(^(-?)\\[dt]?frac\{(\d+)\}\{(\d+)\}$)");
  static const std::regex thousands(R"(^-?\d{1,3}(,\d{3})+(\.\d+)?$)");
  std::smatch m;
  std::string numeric = s;
  if (std::regex_match(s, m, frac)) numeric = m[1].str() + m[2].str() + "/" + m[3].str();
  else if (std::regex_match(s, thousands)) numeric.erase(std::remove(numeric.begin(), numeric.end(), ','), numeric.end());
  if (const auto r = parse_rational(numeric)) {
    return r->second == 1 ? std::to_string(r->first) : std::to_string(r->first) + "/" + std::to_string(r->second);
  }
  return s;
}

std::size_t best_of_n(const CandidateProblem& problem, AggregationRule rule) {
  if (problem.candidates.empty()) throw DataError("problem '" + problem.problem_id + "' has no candidates");
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < problem.candidates.size(); ++i) {
    const auto& c = problem.candidates[i];
    if (!c.step_scores) throw DataError("candidate " + std::to_string(i) + " of '" + problem.problem_id + "' is unscored");
    const double s = aggregate_response_score(*c.step_scores, rule);
    if (i == 0 || s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

std::size_t majority_vote(const CandidateProblem& problem, const CanonicalizeOptions& options) {
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> votes;  // answer -> (count, first index)
  for (std::size_t i = 0; i < problem.candidates.size(); ++i) {
    const auto& a = problem.candidates[i].final_answer;
    if (!a) continue;
    auto [it, inserted] = votes.try_emplace(canonicalize_answer(*a, options), 0, i);
    ++it->second.first;
  }
  if (votes.empty()) throw DataError("no candidate of '" + problem.problem_id + "' has a final answer");
  std::pair<std::size_t, std::size_t> best{0, 0};
  for (const auto& [answer, v] : votes) {
    if (v.first > best.first || (v.first == best.first && v.second < best.second)) best = v;
  }
  return best.second;
}

bool is_correct(const CandidateProblem& problem, const Candidate& candidate, const CanonicalizeOptions& options) {
  if (!problem.gold_answer || !candidate.final_answer) return false;
  return canonicalize_answer(*problem.gold_answer, options) == canonicalize_answer(*candidate.final_answer, options);
}

double pass_at_n(std::span<const CandidateProblem> problems, const CanonicalizeOptions& options) {
  if (problems.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& p : problems) {
    hits += std::any_of(p.candidates.begin(), p.candidates.end(),
                        [&](const Candidate& c) { return is_correct(p, c, options); });
  }
  return static_cast<double>(hits) / static_cast<double>(problems.size());
}

// ---- synthetic tree -------------------------------------------------------

namespace {

struct ChainSpec {
  long start = 0;
  int depth = 0;
  unsigned long long seed = 0;
};

ChainSpec parse_chain(const std::string& problem) {
  ChainSpec c;
  if (std::sscanf(problem.c_str(), "Start from %ld and apply %d operations (seed %llu).", &c.start, &c.depth, &c.seed) != 3 ||
      c.depth < 1) {
    throw DataError("not a synthetic chain problem: '" + problem + "'");
  }
  return c;
}

long amount(const ChainSpec& c, int k) {
  return 2 + static_cast<long>(mix64(c.seed ^ mix64(static_cast<std::uint64_t>(k))) % 40);
}

std::optional<long> last_number(const std::string& s) {
  static const std::regex number(R"(-?\d+)");
  std::optional<long> out;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), number); it != std::sregex_iterator(); ++it) {
    out = std::stol(it->str());
  }
  return out;
}

long current_value(const ChainSpec& c, const std::vector<std::string>& prefix) {
  if (prefix.empty()) return c.start;
  const auto v = last_number(prefix.back());
  if (!v) throw DataError("step without a value: '" + prefix.back() + "'");
  return *v;
}

std::string sound_text(long a, long v) { return "add " + std::to_string(a) + " to get " + std::to_string(v + a); }

}  // namespace

std::string SyntheticTreeGenerator::make_problem(long start, int depth, std::uint64_t seed) {
  return "Start from " + std::to_string(start) + " and apply " + std::to_string(depth) + " operations (seed " +
         std::to_string(seed) + ").";
}

std::string SyntheticTreeGenerator::correct_answer(const std::string& problem) {
  const auto c = parse_chain(problem);
  long v = c.start;
  for (int k = 1; k <= c.depth; ++k) v += amount(c, k);
  return std::to_string(v);
}

bool SyntheticTreeGenerator::is_sound(const std::string& problem, const std::vector<std::string>& prefix,
                                      const std::string& step) {
  const auto c = parse_chain(problem);
  const int k = static_cast<int>(prefix.size()) + 1;
  return step == sound_text(amount(c, k), current_value(c, prefix));
}

std::vector<std::string> SyntheticTreeGenerator::propose(const std::string& problem,
                                                         const std::vector<std::string>& prefix, std::size_t count,
                                                         Rng& rng) {
  const auto c = parse_chain(problem);
  if (static_cast<int>(prefix.size()) >= c.depth) return {};
  const int k = static_cast<int>(prefix.size()) + 1;
  const long a = amount(c, k), v = current_value(c, prefix);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) {
    if (rng.uniform() < flaw_rate_) {
      const long skew = 1 + static_cast<long>(rng.below(9));
      out.push_back("add " + std::to_string(a) + " and guess " + std::to_string(v + a + skew));
    } else {
      out.push_back(sound_text(a, v));
    }
  }
  return out;
}

bool SyntheticTreeGenerator::is_complete(const std::string& problem, const std::vector<std::string>& prefix) const {
  return static_cast<int>(prefix.size()) >= parse_chain(problem).depth;
}

std::optional<std::string> SyntheticTreeGenerator::final_answer(const std::string& problem,
                                                                const std::vector<std::string>& steps) const {
  parse_chain(problem);
  if (steps.empty()) return std::nullopt;
  const auto v = last_number(steps.back());
  if (!v) return std::nullopt;
  return std::to_string(*v);
}

StepScorer prm_step_scorer(const prm::PrmModel& model) {
  return [&model](const std::string& problem, const std::vector<std::string>& steps) {
    return model.forward(Trajectory{"dvts", problem, steps, std::nullopt, std::nullopt}).step_probs;
  };
}

DvtsResult dvts_lite(const std::string& problem, StepGenerator& generator, const StepScorer& scorer,
                     const DvtsConfig& config) {
  if (config.width == 0 || config.beams == 0) throw ConfigError("dvts width and beams must be positive");
  DvtsResult result;
  Rng rng(config.seed);
  for (std::size_t beam = 0; beam < config.beams; ++beam) {
    std::vector<std::vector<std::string>> frontier{{}};
    for (std::size_t depth = 0; !frontier.empty(); ++depth) {
      if (depth >= config.max_depth) throw DataError("dvts reached max_depth without completing a response");
      struct Scored {
        std::vector<std::string> steps;
        double score;
      };
      std::vector<Scored> children;
      for (const auto& prefix : frontier) {
        const auto proposals = generator.propose(problem, prefix, config.width, rng);
        if (proposals.empty()) throw DataError("step generator exhausted before the response was complete");
        for (const auto& p : proposals) {
          auto steps = prefix;
          steps.push_back(p);
          const auto scores = scorer(problem, steps);
          if (scores.size() != steps.size()) throw DomainError("step scorer returned the wrong number of scores");
          children.push_back({std::move(steps), scores.back()});
        }
      }
      std::stable_sort(children.begin(), children.end(),
                       [](const Scored& a, const Scored& b) { return a.score > b.score; });
      if (children.size() > config.width) children.resize(config.width);
      frontier.clear();
      for (auto& ch : children) {
        if (generator.is_complete(problem, ch.steps)) {
          Candidate c;
          c.final_answer = generator.final_answer(problem, ch.steps);
          c.step_scores = scorer(problem, ch.steps);
          c.steps = std::move(ch.steps);
          result.finished.push_back(std::move(c));
        } else {
          frontier.push_back(std::move(ch.steps));
        }
      }
    }
  }
  CandidateProblem pooled;
  pooled.problem_id = "dvts";
  pooled.candidates = result.finished;
  result.selected = best_of_n(pooled, config.rule);
  return result;
}

// ---- reward export ------------------------------------------------------

double softmin_accumulate(std::span<const double> rewards, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("softmin temperature must be positive");
  if (rewards.empty()) throw DomainError("softmin over an empty reward list");
  const double lo = *std::min_element(rewards.begin(), rewards.end());
  double z = 0.0, acc = 0.0;
  for (double r : rewards) {
    const double w = std::exp(-(r - lo) / temperature);
    z += w;
    acc += w * r;
  }
  return acc / z;
}

std::vector<StepRewardRecord> export_step_rewards(const prm::PrmModel& model,
                                                  std::span<const CandidateProblem> problems, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("softmin temperature must be positive");
  std::vector<StepRewardRecord> out;
  for (const auto& p : problems) {
    CandidateProblem scored = p;
    score_candidates(model, scored);
    for (std::size_t i = 0; i < scored.candidates.size(); ++i) {
      StepRewardRecord r;
      r.problem_id = p.problem_id;
      r.candidate = i;
      r.rewards = *scored.candidates[i].step_scores;
      r.accumulated = softmin_accumulate(r.rewards, temperature);
      out.push_back(std::move(r));
    }
  }
  return out;
}

nlohmann::json to_json(const StepRewardRecord& r) {
  return {{"problem_id", r.problem_id}, {"candidate", r.candidate}, {"rewards", r.rewards}, {"accumulated", r.accumulated}};
}

}  // namespace uprm::evalkit
