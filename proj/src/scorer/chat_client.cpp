#include "uprm/scorer/chat_client.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "uprm/errors.hpp"

namespace uprm::scorer {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct MarkerMass {
  double plus = 0.0;
  double minus = 0.0;
};

void accumulate(MarkerMass& mass, const std::string& token, double logprob, const ChatLMConfig& cfg) {
  if (!std::isfinite(logprob) && logprob != -INFINITY) throw NumericError("backend returned a non-finite logprob");
  const std::string t = trim(token);
  if (t == cfg.plus_token) mass.plus += std::exp(logprob);
  if (t == cfg.minus_token) mass.minus += std::exp(logprob);
}

MarkerProb to_marker_prob(const MarkerMass& mass, const ChatLMConfig& cfg) {
  try {
    return renormalize_markers(mass.plus, mass.minus);
  } catch (const ConfigError&) {
    throw ConfigError("neither '" + cfg.plus_token + "' nor '" + cfg.minus_token +
                      "' appears among the returned top logprobs");
  }
}

bool looks_like_overflow(int status, const std::string& body) {
  if (status != 400 && status != 413) return false;
  return body.find("context") != std::string::npos || body.find("too long") != std::string::npos ||
         body.find("maximum") != std::string::npos;
}

}  // namespace

void ChatLMConfig::validate() const {
  if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
    throw ConfigError("backend base_url must start with http:// or https://");
  }
  if (model.empty()) throw ConfigError("backend model name is empty");
  if (plus_token.empty() || minus_token.empty() || plus_token == minus_token) {
    throw ConfigError("backend marker tokens must be non-empty and distinct");
  }
  if (top_logprobs < 2) throw ConfigError("top_logprobs must be at least 2");
  if (!(timeout_seconds > 0.0)) throw ConfigError("timeout must be positive");
  if (max_retries < 0) throw ConfigError("max_retries must be non-negative");
  if (concurrency < 1) throw ConfigError("concurrency must be at least 1");
}

ChatLMClient::ChatLMClient(ChatLMConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto scheme_end = config_.base_url.find("://") + 3;
  const auto path_start = config_.base_url.find('/', scheme_end);
  scheme_host_port_ = config_.base_url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : config_.base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
  }
  in_flight_ = std::make_unique<std::counting_semaphore<>>(config_.concurrency);
}

ChatLMClient::~ChatLMClient() = default;

std::string ChatLMClient::identity() const {
  return "chat-lm{url=" + config_.base_url + ",model=" + config_.model +
         ",mode=" + (config_.mode == ProbeMode::kPrefix ? "prefix" : "echo") + ",plus=" + config_.plus_token +
         ",minus=" + config_.minus_token + ",top=" + std::to_string(config_.top_logprobs) + "}";
}

std::string ChatLMClient::post(const std::string& path, const std::string& body, std::size_t trajectory_index) {
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.retry_backoff_ms << (attempt - 1)));
    }
    httplib::Result res;
    {
      in_flight_->acquire();
      httplib::Client client(scheme_host_port_);
      const auto timeout = std::chrono::duration<double>(config_.timeout_seconds);
      client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      res = client.Post(path_prefix_ + path, headers, body, "application/json");
      in_flight_->release();
    }
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;
    if (looks_like_overflow(res->status, res->body)) {
      throw ContextOverflowError("backend rejected the context at trajectory index " +
                                     std::to_string(trajectory_index) + ": " + res->body.substr(0, 200),
                                 trajectory_index);
    }
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
    if (res->status != 429 && res->status < 500) throw BackendError("backend request failed, " + last_error, false);
  }
  throw BackendError("backend unavailable after " + std::to_string(config_.max_retries + 1) + " attempts, " + last_error,
                     true);
}

MarkerProb ChatLMClient::query_prefix(const Conversation& conversation, std::size_t slot) {
  const auto& s = conversation.slots[slot];
  json messages = json::array();
  for (std::size_t i = 0; i < s.turn_index; ++i) {
    messages.push_back({{"role", role_name(conversation.turns[i].role)}, {"content", conversation.turns[i].text}});
  }
  const json request = {{"model", config_.model},          {"messages", messages},
                        {"max_tokens", 1},                 {"temperature", 0.0},
                        {"logprobs", true},                {"top_logprobs", config_.top_logprobs}};
  const std::string body = post("/chat/completions", request.dump(), s.sequence_index);
  MarkerMass mass;
  try {
    const json r = json::parse(body);
    const auto& top = r.at("choices").at(0).at("logprobs").at("content").at(0).at("top_logprobs");
    for (const auto& entry : top) {
      const auto& lp = entry.at("logprob");
      if (lp.is_null()) throw NumericError("backend returned a null logprob");
      accumulate(mass, entry.at("token").get<std::string>(), lp.get<double>(), config_);
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("unexpected chat-completions response: ") + e.what(), false);
  }
  return to_marker_prob(mass, config_);
}

MarkerProbabilities ChatLMClient::query_echo(const Conversation& conversation) {
  const RenderedText rendered = render_chatml(conversation);
  const json request = {{"model", config_.model},  {"prompt", rendered.text}, {"max_tokens", 1},
                        {"temperature", 0.0},      {"echo", true},            {"logprobs", config_.top_logprobs}};
  const std::size_t last = conversation.trajectory_ids.empty() ? 0 : conversation.trajectory_ids.size() - 1;
  const std::string body = post("/completions", request.dump(), last);
  MarkerProbabilities out;
  try {
    const json r = json::parse(body);
    const auto& lp = r.at("choices").at(0).at("logprobs");
    const auto offsets = lp.at("text_offset").get<std::vector<std::size_t>>();
    const auto& top = lp.at("top_logprobs");
    for (std::size_t s = 0; s < rendered.marker_offsets.size(); ++s) {
      std::size_t idx = offsets.size();
      for (std::size_t i = 0; i < offsets.size(); ++i) {
        if (offsets[i] == rendered.marker_offsets[s]) {
          idx = i;
          break;
        }
      }
      if (idx == offsets.size() || top.at(idx).is_null()) {
        throw BackendError("echo response has no token at marker offset " + std::to_string(rendered.marker_offsets[s]),
                           false);
      }
      MarkerMass mass;
      for (const auto& [token, value] : top.at(idx).items()) {
        if (value.is_null()) throw NumericError("backend returned a null logprob");
        accumulate(mass, token, value.get<double>(), config_);
      }
      out.push_back(to_marker_prob(mass, config_));
    }
  } catch (const json::exception& e) {
    throw BackendError(std::string("unexpected completions response: ") + e.what(), false);
  }
  return out;
}

MarkerProbabilities ChatLMClient::query_markers(const Conversation& conversation) {
  check_context_limit(conversation, config_.max_context_chars);
  if (config_.mode == ProbeMode::kEcho) return query_echo(conversation);

  const std::size_t n = conversation.slots.size();
  MarkerProbabilities out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = query_prefix(conversation, i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config_.concurrency), n);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  // Report the earliest failing slot so errors are deterministic.
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace uprm::scorer
