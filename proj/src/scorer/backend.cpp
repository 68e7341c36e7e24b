#include "uprm/scorer/backend.hpp"

#include <cmath>

#include "uprm/errors.hpp"

namespace uprm::scorer {

MarkerProb renormalize_markers(double raw_plus, double raw_minus) {
  if (!std::isfinite(raw_plus) || !std::isfinite(raw_minus) || raw_plus < 0.0 || raw_minus < 0.0) {
    throw NumericError("non-finite or negative marker probability");
  }
  const double total = raw_plus + raw_minus;
  if (total <= 0.0) throw ConfigError("neither marker token received probability mass");
  return {raw_plus / total, raw_minus / total};
}

void check_context_limit(const Conversation& conversation, std::optional<std::size_t> max_chars) {
  if (!max_chars) return;
  const RenderedText rendered = render_chatml(conversation);
  if (rendered.text.size() <= *max_chars) return;
  // Find the slot whose marker offset first passes the limit; the overflow
  // belongs to its sequence. Past the last marker, blame the last sequence.
  std::size_t index = conversation.trajectory_ids.empty() ? 0 : conversation.trajectory_ids.size() - 1;
  for (std::size_t s = 0; s < conversation.slots.size(); ++s) {
    if (rendered.marker_offsets[s] >= *max_chars) {
      index = conversation.slots[s].sequence_index;
      break;
    }
  }
  throw ContextOverflowError("context of " + std::to_string(rendered.text.size()) + " chars exceeds the limit of " +
                                 std::to_string(*max_chars) + " at trajectory index " + std::to_string(index),
                             index);
}

}  // namespace uprm::scorer
