#pragma once

#include <string_view>
#include <vector>

namespace uprm::prm {

struct FeaturizerConfig {
  std::size_t dim = 1024;
  int min_n = 2;
  int max_n = 4;
};

/// Signed feature hashing of character n-grams. The text is lowercased,
/// runs of whitespace collapse to one space, and "^"/"$" mark the ends.
/// Output is L2-normalized (all zeros for an empty text).
class Featurizer {
 public:
  explicit Featurizer(FeaturizerConfig config = {});

  std::vector<double> features(std::string_view text) const;
  /// Row-major [texts.size() x dim].
  std::vector<double> features(const std::vector<std::string_view>& texts) const;

  const FeaturizerConfig& config() const noexcept { return config_; }

 private:
  FeaturizerConfig config_;
};

}  // namespace uprm::prm
