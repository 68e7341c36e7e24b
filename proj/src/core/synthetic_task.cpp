#include "uprm/core/synthetic_task.hpp"

#include <string>

#include "uprm/core/random.hpp"
#include "uprm/errors.hpp"

namespace uprm {

void SyntheticTaskConfig::validate() const {
  if (count == 0) throw ConfigError("synthetic task needs at least one trajectory");
  if (min_steps < 1 || max_steps < min_steps) {
    throw ConfigError("synthetic step range [" + std::to_string(min_steps) + ", " + std::to_string(max_steps) +
                      "] is invalid");
  }
  if (!(later_flaw_rate >= 0.0 && later_flaw_rate <= 1.0)) throw ConfigError("later_flaw_rate must lie in [0, 1]");
}

namespace {

using std::to_string;

std::string sound_step(Rng& rng, long& total) {
  const long a = 2 + static_cast<long>(rng.below(40));
  switch (rng.below(5)) {
    case 0:
      total += a;
      return "add " + to_string(a) + " to the running value to get " + to_string(total);
    case 1: {
      const long before = total;
      total *= 2;
      return "double " + to_string(before) + " which gives " + to_string(total);
    }
    case 2: {
      const long before = total;
      total -= a;
      return "subtract " + to_string(a) + " from " + to_string(before) + " leaving " + to_string(total);
    }
    case 3:
      return "check the units again; the value stays " + to_string(total);
    default: {
      const long before = total;
      total += 3 * a;
      return "three groups of " + to_string(a) + " add up to " + to_string(3 * a) + ", so " + to_string(before) +
             " becomes " + to_string(total);
    }
  }
}

std::string flawed_step(Rng& rng, long& total) {
  const long a = 2 + static_cast<long>(rng.below(40));
  const long skew = 1 + static_cast<long>(rng.below(9));
  switch (rng.below(5)) {
    case 0:
      total += a + skew;
      return "assume without checking that adding " + to_string(a) + " gives " + to_string(total);
    case 1:
      total = -total;
      return "drop the sign so the value flips to " + to_string(total);
    case 2:
      total = total * 2 + skew;
      return "roughly double it, guessing about " + to_string(total);
    case 3:
      total -= a + skew;
      return "forget the carry and subtract " + to_string(a) + " to land on " + to_string(total);
    default:
      total += skew * 10;
      return "swap the digits by mistake and write " + to_string(total);
  }
}

}  // namespace

TrajectoryDataset generate_synthetic_task(const SyntheticTaskConfig& config) {
  config.validate();
  TrajectoryDataset ds;
  ds.label_mode = LabelMode::kLabeled;
  ds.source_path = "synthetic:" + to_string(config.seed);
  Rng rng(mix64(config.seed ^ 0x51e7a5c3ULL));
  ds.trajectories.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i) {
    Trajectory t;
    t.id = config.id_prefix + "-" + to_string(config.seed) + "-" + to_string(i);
    const int T = config.min_steps + static_cast<int>(rng.below(static_cast<std::uint64_t>(
                                         config.max_steps - config.min_steps + 1)));
    const int gold = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T + 1)));
    long total = 1 + static_cast<long>(rng.below(50));
    t.problem = "Start from " + to_string(total) + " and apply " + to_string(T) + " operations (case " +
                to_string(i) + ").";
    for (int s = 1; s <= T; ++s) {
      const bool flawed = s == gold || (s > gold && rng.uniform() < config.later_flaw_rate);
      t.steps.push_back(flawed ? flawed_step(rng, total) : sound_step(rng, total));
    }
    t.gold_first_error = gold;
    t.final_answer = to_string(total);
    ds.trajectories.push_back(std::move(t));
  }
  ds.validate();
  return ds;
}

}  // namespace uprm
