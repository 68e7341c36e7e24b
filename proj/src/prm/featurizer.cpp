#include "uprm/prm/featurizer.hpp"

#include <cctype>
#include <cmath>
#include <string>

#include "uprm/core/random.hpp"
#include "uprm/errors.hpp"

namespace uprm::prm {

Featurizer::Featurizer(FeaturizerConfig config) : config_(config) {
  if (config_.dim == 0) throw ConfigError("feature dimension must be positive");
  if (config_.min_n < 1 || config_.max_n < config_.min_n) throw ConfigError("invalid n-gram range");
}

std::vector<double> Featurizer::features(std::string_view text) const {
  std::string norm = "^";
  bool space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      space = true;
      continue;
    }
    if (space && norm.size() > 1) norm += ' ';
    space = false;
    norm += static_cast<char>(std::tolower(c));
  }
  norm += '$';

  std::vector<double> v(config_.dim, 0.0);
  if (norm.size() <= 2) return v;
  const std::string_view s(norm);
  for (int n = config_.min_n; n <= config_.max_n; ++n) {
    const std::uint64_t seed = mix64(static_cast<std::uint64_t>(n));
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
      const std::uint64_t h = mix64(fnv1a64(s.substr(i, n), seed));
      v[h % config_.dim] += (h >> 63) ? -1.0 : 1.0;
    }
  }
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
  }
  return v;
}

std::vector<double> Featurizer::features(const std::vector<std::string_view>& texts) const {
  std::vector<double> out;
  out.reserve(texts.size() * config_.dim);
  for (auto t : texts) {
    const auto f = features(t);
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

}  // namespace uprm::prm
