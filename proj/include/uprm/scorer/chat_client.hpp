#pragma once

// Marker probabilities from an OpenAI-compatible HTTP endpoint.
//
// kPrefix (default) issues one chat-completions request per marker with the
// turns before it, max_tokens = 1 and top_logprobs, and reads the first
// generated token's alternatives. kEcho sends the whole ChatML text to the
// completions endpoint with echo = true and reads the prompt-token
// alternatives at each marker's character offset, one request per context.
// Both give the same probabilities for a backend that scores the same
// tokens; echo needs prompt logprobs support on the server.
//
// The API key is read from the environment variable named by `api_key_env`
// and never stored elsewhere.

#include <cstddef>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>

#include "uprm/scorer/backend.hpp"

namespace uprm::scorer {

enum class ProbeMode { kPrefix, kEcho };

struct ChatLMConfig {
  /// Scheme, host, optional port and path prefix, e.g. http://127.0.0.1:8000/v1
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string model = "Qwen2.5-14B-Instruct";
  std::string plus_token = "+";
  std::string minus_token = "-";
  ProbeMode mode = ProbeMode::kPrefix;
  int top_logprobs = 20;
  double timeout_seconds = 60.0;
  int max_retries = 3;
  int retry_backoff_ms = 200;
  int concurrency = 4;
  std::optional<std::size_t> max_context_chars;
  std::string api_key_env = "UPRM_API_KEY";

  void validate() const;
};

class ChatLMClient : public ScorerBackend {
 public:
  explicit ChatLMClient(ChatLMConfig config);
  ~ChatLMClient() override;

  MarkerProbabilities query_markers(const Conversation& conversation) override;
  std::string identity() const override;

  const ChatLMConfig& config() const noexcept { return config_; }

 private:
  MarkerProb query_prefix(const Conversation& conversation, std::size_t slot);
  MarkerProbabilities query_echo(const Conversation& conversation);
  std::string post(const std::string& path, const std::string& body, std::size_t trajectory_index);

  ChatLMConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::string api_key_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
};

}  // namespace uprm::scorer
