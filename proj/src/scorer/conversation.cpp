#include "uprm/scorer/conversation.hpp"

#include "uprm/errors.hpp"

namespace uprm::scorer {

const char* const kJudgeSystemPrompt =
    "You are a strict mathematical reasoning judge.\n"
    "\n"
    "Your task is to evaluate one individual reasoning step of a math problem at a time.\n"
    "\n"
    "- If the step is mathematically correct, respond with `+`.\n"
    "- If the step is mathematically incorrect or logically flawed, respond with `-`.\n"
    "- Do not provide any explanation, comment, or feedback - only respond with `+` or `-`, and nothing else.\n"
    "- Each input is either a single reasoning step or a new problem followed by its first reasoning step. "
    "In both cases, evaluate only the validity of the reasoning step.\n"
    "- For each new problem, once you determine that a step is incorrect, you must consider all subsequent "
    "steps for that problem to also be incorrect, and respond with `-` for them as well.\n"
    "\n"
    "Your response must only be one of these two symbols: `+` or `-`.";

const char* role_name(Role role) noexcept {
  switch (role) {
    case Role::kSystem:
      return "system";
    case Role::kUser:
      return "user";
    case Role::kAssistant:
      return "assistant";
  }
  return "user";
}

void PromptTemplate::validate() const {
  if (system_prompt.empty()) throw ConfigError("prompt template has an empty system prompt");
  if (plus_marker.empty() || minus_marker.empty()) throw ConfigError("prompt template has an empty marker");
  if (plus_marker == minus_marker) throw ConfigError("plus and minus markers must differ");
}

MarkedSequence render_marked_sequence(const Trajectory& trajectory, const FirstErrorPosition& j,
                                      const PromptTemplate& tmpl) {
  tmpl.validate();
  if (j.num_steps() != trajectory.num_steps()) {
    throw DomainError("position built for " + std::to_string(j.num_steps()) + " steps, trajectory '" +
                      trajectory.id + "' has " + std::to_string(trajectory.num_steps()));
  }
  MarkedSequence seq;
  seq.trajectory_id = trajectory.id;
  seq.candidate_j = j.value();
  seq.num_steps = trajectory.num_steps();
  const int shown = std::min(j.value(), trajectory.num_steps());
  for (int t = 1; t <= shown; ++t) {
    std::string user = t == 1 ? trajectory.problem + tmpl.problem_step_separator + trajectory.steps[0]
                              : trajectory.steps[t - 1];
    seq.turns.push_back({Role::kUser, std::move(user)});
    seq.marker_positions.push_back(seq.turns.size());
    seq.turns.push_back({Role::kAssistant, t == j.value() ? tmpl.minus_marker : tmpl.plus_marker});
  }
  return seq;
}

Conversation build_conversation(const PromptTemplate& tmpl, std::span<const MarkedSequence> sequences) {
  tmpl.validate();
  Conversation c;
  c.plus_marker = tmpl.plus_marker;
  c.minus_marker = tmpl.minus_marker;
  c.turns.push_back({Role::kSystem, tmpl.system_prompt});
  for (std::size_t n = 0; n < sequences.size(); ++n) {
    const auto& seq = sequences[n];
    const std::size_t base = c.turns.size();
    c.turns.insert(c.turns.end(), seq.turns.begin(), seq.turns.end());
    for (std::size_t k = 0; k < seq.marker_positions.size(); ++k) {
      c.slots.push_back({base + seq.marker_positions[k], n, static_cast<int>(k) + 1});
    }
    c.trajectory_ids.push_back(seq.trajectory_id);
  }
  return c;
}

namespace {

void append_turn(std::string& out, const ChatTurn& turn) {
  out += "<|im_start|>";
  out += role_name(turn.role);
  out += '\n';
  out += turn.text;
  out += "<|im_end|>\n";
}

}  // namespace

RenderedText render_chatml(const Conversation& conversation) {
  RenderedText r;
  std::size_t next_slot = 0;
  for (std::size_t i = 0; i < conversation.turns.size(); ++i) {
    const auto& turn = conversation.turns[i];
    if (next_slot < conversation.slots.size() && conversation.slots[next_slot].turn_index == i) {
      r.marker_offsets.push_back(r.text.size() + std::string("<|im_start|>").size() +
                                 std::string(role_name(turn.role)).size() + 1);
      ++next_slot;
    }
    append_turn(r.text, turn);
  }
  return r;
}

std::string render_chatml_prefix(const Conversation& conversation, std::size_t turn_index) {
  std::string out;
  for (std::size_t i = 0; i < turn_index && i < conversation.turns.size(); ++i) append_turn(out, conversation.turns[i]);
  out += "<|im_start|>assistant\n";
  return out;
}

}  // namespace uprm::scorer
