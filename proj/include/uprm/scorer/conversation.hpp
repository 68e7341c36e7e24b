#pragma once

// Chat rendering of marked sequences.
//
// A trajectory scored at candidate position j becomes alternating turns
//   user: problem + separator + step 1    assistant: marker
//   user: step 2                          assistant: marker
//   ...
// ending at step min(j, T). Every marker is "+" except the last one when
// j <= T, which is "-". Several marked sequences share one system turn when
// concatenated into a joint context.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "uprm/core/trajectory.hpp"

namespace uprm::scorer {

enum class Role { kSystem, kUser, kAssistant };

const char* role_name(Role role) noexcept;

struct ChatTurn {
  Role role = Role::kUser;
  std::string text;

  friend bool operator==(const ChatTurn&, const ChatTurn&) = default;
};

/// The judge system prompt, verbatim.
extern const char* const kJudgeSystemPrompt;

struct PromptTemplate {
  std::string system_prompt = kJudgeSystemPrompt;
  /// Joins the problem and the first step inside the first user turn.
  std::string problem_step_separator = "\n\n";
  std::string plus_marker = "+";
  std::string minus_marker = "-";

  /// Throws ConfigError on an empty prompt or marker, or identical markers.
  void validate() const;
};

struct MarkedSequence {
  std::string trajectory_id;
  int candidate_j = 1;
  int num_steps = 0;
  /// User and assistant turns only; the system turn is added per context.
  std::vector<ChatTurn> turns;
  /// Indices into `turns` of the assistant marker turns, one per step shown.
  std::vector<std::size_t> marker_positions;
};

MarkedSequence render_marked_sequence(const Trajectory& trajectory, const FirstErrorPosition& j,
                                      const PromptTemplate& tmpl);

/// Where the probability of one marker is read.
struct MarkerSlot {
  std::size_t turn_index = 0;      // assistant turn in Conversation::turns
  std::size_t sequence_index = 0;  // which marked sequence it belongs to
  int step = 0;                    // 1-based step it judges
};

/// One scoring context: a system turn followed by marked sequences.
struct Conversation {
  std::vector<ChatTurn> turns;
  std::vector<MarkerSlot> slots;
  std::vector<std::string> trajectory_ids;  // per sequence
  std::string plus_marker = "+";
  std::string minus_marker = "-";
};

Conversation build_conversation(const PromptTemplate& tmpl, std::span<const MarkedSequence> sequences);

/// ChatML text ("<|im_start|>role\n...<|im_end|>\n" per turn).
struct RenderedText {
  std::string text;
  /// Character offset of each slot's marker text.
  std::vector<std::size_t> marker_offsets;
};

RenderedText render_chatml(const Conversation& conversation);

/// Text preceding turn `turn_index`, followed by the opening of an
/// assistant turn: the prompt whose next token is the marker.
std::string render_chatml_prefix(const Conversation& conversation, std::size_t turn_index);

}  // namespace uprm::scorer
