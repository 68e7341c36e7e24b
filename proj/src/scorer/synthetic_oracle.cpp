#include "uprm/scorer/synthetic_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "uprm/core/first_error.hpp"
#include "uprm/core/random.hpp"
#include "uprm/errors.hpp"

namespace uprm::scorer {

void SyntheticOracleConfig::validate() const {
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw ConfigError("oracle accuracy must lie in [0, 1]");
  if (confidence && !(*confidence >= 0.0 && *confidence <= 1.0)) {
    throw ConfigError("oracle confidence must lie in [0, 1]");
  }
  if (!(drift >= 0.0 && drift <= 1.0)) throw ConfigError("oracle drift must lie in [0, 1]");
}

SyntheticOracle::SyntheticOracle(SyntheticOracleConfig config, std::unordered_map<std::string, int> answer_key)
    : config_(config), answer_key_(std::move(answer_key)) {
  config_.validate();
  // Order-independent digest of the key so the identity changes with it.
  std::map<std::string, int> sorted(answer_key_.begin(), answer_key_.end());
  std::uint64_t h = fnv1a64("answer-key");
  for (const auto& [id, gold] : sorted) h = fnv1a64(id + "=" + std::to_string(gold) + ";", h);
  key_digest_ = h;
}

SyntheticOracle SyntheticOracle::from_dataset(SyntheticOracleConfig config, const TrajectoryDataset& labeled) {
  std::unordered_map<std::string, int> key;
  for (const auto& t : labeled.trajectories) {
    if (!t.gold_first_error) throw DataError("oracle answer key needs a label for trajectory '" + t.id + "'");
    key.emplace(t.id, *t.gold_first_error);
  }
  return SyntheticOracle(config, std::move(key));
}

bool SyntheticOracle::perceives_correctly(const std::string& trajectory_id, int step) const {
  const std::uint64_t bits =
      mix64(fnv1a64(trajectory_id, mix64(config_.seed)) ^ mix64(static_cast<std::uint64_t>(step)));
  return unit_interval(bits) < config_.accuracy;
}

double SyntheticOracle::base_plus(const std::string& trajectory_id, int step) const {
  const auto it = answer_key_.find(trajectory_id);
  if (it == answer_key_.end()) {
    throw BackendError("synthetic oracle has no answer for trajectory '" + trajectory_id + "'", false);
  }
  const bool correct = step < it->second;
  double p = 0.0;
  if (config_.noise == OracleNoise::kDeterministic) {
    p = correct ? config_.accuracy : 1.0 - config_.accuracy;
  } else {
    const double kappa = config_.confidence.value_or(config_.accuracy);
    const bool perceived = perceives_correctly(trajectory_id, step) ? correct : !correct;
    p = perceived ? kappa : 1.0 - kappa;
  }
  return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
}

MarkerProbabilities SyntheticOracle::query_markers(const Conversation& conversation) {
  check_context_limit(conversation, config_.max_context_chars);
  MarkerProbabilities out;
  out.reserve(conversation.slots.size());
  std::size_t minus_seen = 0;
  std::size_t markers_seen = 0;
  std::size_t turn = 0;
  for (const auto& slot : conversation.slots) {
    for (; turn < slot.turn_index; ++turn) {
      const auto& t = conversation.turns[turn];
      if (t.role != Role::kAssistant) continue;
      ++markers_seen;
      minus_seen += t.text == conversation.minus_marker;
    }
    const double plus = base_plus(conversation.trajectory_ids.at(slot.sequence_index), slot.step);
    double minus = 1.0 - plus;
    if (config_.drift > 0.0 && markers_seen > 0) {
      const double f = static_cast<double>(minus_seen) / static_cast<double>(markers_seen);
      minus = (1.0 - config_.drift) * minus + config_.drift * f;
      minus = std::clamp(minus, kProbEpsilon, 1.0 - kProbEpsilon);
    }
    out.push_back({1.0 - minus, minus});
  }
  return out;
}

std::string SyntheticOracle::identity() const {
  std::ostringstream os;
  os.precision(17);
  os << "synthetic-oracle{noise=" << (config_.noise == OracleNoise::kFlip ? "flip" : "deterministic")
     << ",a=" << config_.accuracy << ",kappa=" << config_.confidence.value_or(config_.accuracy)
     << ",d=" << config_.drift << ",seed=" << config_.seed << ",key=" << std::hex << key_digest_ << "}";
  return os.str();
}

}  // namespace uprm::scorer
