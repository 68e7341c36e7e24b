#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "uprm/scorer/conversation.hpp"

namespace uprm::scorer {

/// Marker probabilities at one slot, renormalized over the two markers.
struct MarkerProb {
  double p_plus = 0.5;
  double p_minus = 0.5;

  friend bool operator==(const MarkerProb&, const MarkerProb&) = default;
};

using MarkerProbabilities = std::vector<MarkerProb>;

/// Renormalizes raw (unnormalized) marker probabilities. Throws NumericError
/// on non-finite or negative input and ConfigError when both are zero (the
/// markers are not in the backend's vocabulary or top candidates).
MarkerProb renormalize_markers(double raw_plus, double raw_minus);

/// Source of marker probabilities. Implementations must be safe for
/// concurrent calls and return identical output for identical conversations.
class ScorerBackend {
 public:
  virtual ~ScorerBackend() = default;

  /// One MarkerProb per conversation slot, in slot order. The probability at
  /// a slot depends only on the turns before it.
  virtual MarkerProbabilities query_markers(const Conversation& conversation) = 0;

  /// Stable description of everything that affects the output; used as the
  /// cache namespace.
  virtual std::string identity() const = 0;
};

/// Throws ContextOverflowError naming the first sequence whose turns push
/// the rendered context past `max_chars`.
void check_context_limit(const Conversation& conversation, std::optional<std::size_t> max_chars);

}  // namespace uprm::scorer
