#include "uprm/trainer/config.hpp"

#include <cstdio>
#include <thread>

#include "uprm/core/dataset.hpp"
#include "uprm/core/random.hpp"
#include "uprm/errors.hpp"
#include "uprm/scorer/cached_backend.hpp"

namespace uprm::trainer {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string default_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return std::to_string(n == 0 ? 1 : n);
}

void append(SettingSchema& a, const SettingSchema& b) { a.insert(a.end(), b.begin(), b.end()); }

}  // namespace

void BackendConfig::validate() const {
  if (kind == BackendKind::kOracle) oracle.validate();
  else chat.validate();
}

nlohmann::json BackendConfig::to_json() const {
  nlohmann::json j;
  if (kind == BackendKind::kOracle) {
    j["kind"] = "oracle";
    j["accuracy"] = oracle.accuracy;
    if (oracle.confidence) j["confidence"] = *oracle.confidence;
    j["drift"] = oracle.drift;
    j["noise"] = oracle.noise == scorer::OracleNoise::kFlip ? "flip" : "deterministic";
    j["seed"] = oracle.seed;
    if (oracle.max_context_chars) j["max_context_chars"] = *oracle.max_context_chars;
  } else {
    j["kind"] = "chat";
    j["base_url"] = chat.base_url;
    j["model"] = chat.model;
    j["mode"] = chat.mode == scorer::ProbeMode::kPrefix ? "prefix" : "echo";
    j["plus_token"] = chat.plus_token;
    j["minus_token"] = chat.minus_token;
    j["top_logprobs"] = chat.top_logprobs;
    if (chat.max_context_chars) j["max_context_chars"] = *chat.max_context_chars;
  }
  return j;
}

std::shared_ptr<scorer::ScorerBackend> make_backend(const BackendConfig& config, const TrajectoryDataset* fallback_key) {
  config.validate();
  std::shared_ptr<scorer::ScorerBackend> inner;
  if (config.kind == BackendKind::kOracle) {
    if (config.answer_key_path) {
      const auto key = load_dataset(*config.answer_key_path, LabelMode::kLabeled);
      inner = std::make_shared<scorer::SyntheticOracle>(scorer::SyntheticOracle::from_dataset(config.oracle, key));
    } else if (fallback_key && fallback_key->label_mode == LabelMode::kLabeled) {
      inner = std::make_shared<scorer::SyntheticOracle>(scorer::SyntheticOracle::from_dataset(config.oracle, *fallback_key));
    } else {
      throw ConfigError("the oracle backend needs a labeled answer key (set oracle.answer_key)");
    }
  } else {
    inner = std::make_shared<scorer::ChatLMClient>(config.chat);
  }
  if (!config.cache_path) return inner;
  return std::make_shared<scorer::CachedBackend>(inner, std::filesystem::path(*config.cache_path));
}

void TrainConfig::validate() const {
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  if (step_budget < 1) throw ConfigError("step_budget must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (critic_learning_rate && !(*critic_learning_rate >= 0.0)) throw ConfigError("critic_learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (total_updates < 0) throw ConfigError("total_updates must be >= 0");
  if (grad_accumulation < 1) throw ConfigError("grad_accumulation must be >= 1");
  if (checkpoint_interval < 0 || log_interval < 0) throw ConfigError("intervals must be >= 0");
  if (critic.heads == 0 || critic.hidden == 0 || critic.hidden % critic.heads != 0) {
    throw ConfigError("critic.hidden must be a positive multiple of critic.heads");
  }
  if (critic.history_dim == 0) throw ConfigError("critic.history_dim must be positive");
  if (!(critic.dropout >= 0.0 && critic.dropout < 1.0)) throw ConfigError("critic.dropout must lie in [0, 1)");
  prm.validate();
  backend.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"gamma", gamma},
          {"rho", rho},
          {"step_budget", step_budget},
          {"learning_rate", learning_rate},
          {"critic_learning_rate", critic_lr()},
          {"weight_decay", weight_decay},
          {"total_updates", total_updates},
          {"grad_accumulation", grad_accumulation},
          {"seed", seed},
          {"checkpoint_interval", checkpoint_interval},
          {"log_interval", log_interval},
          {"diagnostics", diagnostics},
          {"prm", {{"feature_dim", prm.features.dim}, {"hidden", prm.hidden}, {"head_hidden", prm.head_hidden}}},
          {"critic",
           {{"hidden", critic.hidden}, {"heads", critic.heads}, {"history_dim", critic.history_dim},
            {"dropout", critic.dropout}}},
          {"backend", backend.to_json()}};
}

std::string TrainConfig::hash() const {
  nlohmann::json j = to_json();
  j.erase("total_updates");
  j.erase("checkpoint_interval");
  j.erase("log_interval");
  j.erase("diagnostics");
  const std::string text = j.dump();
  return hex64(fnv1a64(text)) + hex64(fnv1a64(text, 0x9e3779b97f4a7c15ULL));
}

void SupervisedConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  prm.validate();
}

nlohmann::json SupervisedConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"weight_decay", weight_decay}, {"epochs", epochs},
          {"batch_size", batch_size},       {"seed", seed},
          {"prm", {{"feature_dim", prm.features.dim}, {"hidden", prm.hidden}, {"head_hidden", prm.head_hidden}}}};
}

SettingSchema prm_schema() {
  return {
      {"prm.feature_dim", "1024", "hashed n-gram feature width"},
      {"prm.hidden", "128", "PRM recurrent width"},
      {"prm.head_hidden", "64", "PRM head hidden width"},
  };
}

SettingSchema backend_schema() {
  return {
      {"backend", "oracle", "scorer backend: oracle | chat"},
      {"cache", "", "append-only JSONL response cache"},
      {"oracle.accuracy", "0.9", "probability the oracle perceives a step's true label"},
      {"oracle.confidence", "", "marker confidence for flip noise (default: accuracy)"},
      {"oracle.drift", "0", "in-context copying strength in [0, 1]"},
      {"oracle.noise", "flip", "flip | deterministic"},
      {"oracle.seed", "0", "seed of the oracle's perception noise"},
      {"oracle.max_context_chars", "", "simulated context limit"},
      {"oracle.answer_key", "", "labeled dataset with the oracle's answer key (default: the data file)"},
      {"chat.base_url", "http://127.0.0.1:8000/v1", "OpenAI-compatible endpoint"},
      {"chat.model", "Qwen2.5-14B-Instruct", "judge model name"},
      {"chat.mode", "prefix", "prefix | echo"},
      {"chat.plus_token", "+", "token read as the correct marker"},
      {"chat.minus_token", "-", "token read as the incorrect marker"},
      {"chat.top_logprobs", "20", "alternatives requested per position"},
      {"chat.timeout", "60", "request timeout in seconds"},
      {"chat.max_retries", "3", "retries on transport errors, 429 and 5xx"},
      {"chat.concurrency", default_workers(), "parallel requests"},
      {"chat.max_context_chars", "", "refuse contexts longer than this"},
      {"chat.api_key_env", "UPRM_API_KEY", "environment variable holding the API key"},
  };
}

SettingSchema train_schema() {
  SettingSchema s = {
      {"gamma", "3", "entropy regularization strength"},
      {"rho", "0.25", "corner-mass budget of the correction term"},
      {"step_budget", "80", "reasoning steps per packed batch"},
      {"learning_rate", "0.001", "AdamW learning rate (constant)"},
      {"critic_learning_rate", "", "critic learning rate (default: learning_rate)"},
      {"weight_decay", "0", "AdamW decoupled weight decay"},
      {"total_updates", "1000", "optimizer updates"},
      {"grad_accumulation", "8", "packed batches per update"},
      {"seed", "0", "seed for initialization, packing and sampling"},
      {"checkpoint_interval", "100", "updates between checkpoints (0: final only)"},
      {"log_interval", "10", "updates between progress lines"},
      {"diagnostics", "false", "write per-batch estimator diagnostics"},
      {"critic.hidden", "128", "critic attention width"},
      {"critic.heads", "4", "critic attention heads"},
      {"critic.history_dim", "32", "width of the history summary fed to the critic"},
      {"critic.dropout", "0.1", "dropout on the attention output"},
  };
  append(s, prm_schema());
  append(s, backend_schema());
  return s;
}

SettingSchema supervised_schema() {
  SettingSchema s = {
      {"learning_rate", "0.001", "AdamW learning rate (constant)"},
      {"weight_decay", "0", "AdamW decoupled weight decay"},
      {"epochs", "5", "passes over the labeled data"},
      {"batch_size", "16", "trajectories per update"},
      {"seed", "0", "seed for initialization and shuffling"},
  };
  append(s, prm_schema());
  return s;
}

namespace {

template <typename T>
T checked_cast(const Settings& s, const std::string& key, std::int64_t lo, std::int64_t hi) {
  const auto v = s.get_int(key);
  if (v < lo || v > hi) {
    throw ConfigError(s.origin(key) + ": setting '" + key + "' must lie in [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "], got " + std::to_string(v));
  }
  return static_cast<T>(v);
}

constexpr std::int64_t kBig = 1'000'000'000;

}  // namespace

prm::PrmConfig prm_from_settings(const Settings& s) {
  prm::PrmConfig c;
  c.features.dim = checked_cast<std::size_t>(s, "prm.feature_dim", 1, 1 << 24);
  c.hidden = checked_cast<std::size_t>(s, "prm.hidden", 1, 1 << 16);
  c.head_hidden = checked_cast<std::size_t>(s, "prm.head_hidden", 1, 1 << 16);
  return c;
}

BackendConfig backend_from_settings(const Settings& s) {
  BackendConfig b;
  const std::string kind = s.get_string("backend");
  if (kind == "oracle") b.kind = BackendKind::kOracle;
  else if (kind == "chat") b.kind = BackendKind::kChat;
  else throw ConfigError(s.origin("backend") + ": backend must be 'oracle' or 'chat', got '" + kind + "'");
  b.cache_path = s.get_optional("cache");

  b.oracle.accuracy = s.get_double("oracle.accuracy");
  b.oracle.confidence = s.get_optional_double("oracle.confidence");
  b.oracle.drift = s.get_double("oracle.drift");
  const std::string noise = s.get_string("oracle.noise");
  if (noise == "flip") b.oracle.noise = scorer::OracleNoise::kFlip;
  else if (noise == "deterministic") b.oracle.noise = scorer::OracleNoise::kDeterministic;
  else throw ConfigError(s.origin("oracle.noise") + ": oracle.noise must be 'flip' or 'deterministic'");
  b.oracle.seed = s.get_u64("oracle.seed");
  if (s.has("oracle.max_context_chars")) b.oracle.max_context_chars = s.get_u64("oracle.max_context_chars");
  b.answer_key_path = s.get_optional("oracle.answer_key");

  b.chat.base_url = s.get_string("chat.base_url");
  b.chat.model = s.get_string("chat.model");
  const std::string mode = s.get_string("chat.mode");
  if (mode == "prefix") b.chat.mode = scorer::ProbeMode::kPrefix;
  else if (mode == "echo") b.chat.mode = scorer::ProbeMode::kEcho;
  else throw ConfigError(s.origin("chat.mode") + ": chat.mode must be 'prefix' or 'echo'");
  b.chat.plus_token = s.get_string("chat.plus_token");
  b.chat.minus_token = s.get_string("chat.minus_token");
  b.chat.top_logprobs = checked_cast<int>(s, "chat.top_logprobs", 1, 100);
  b.chat.timeout_seconds = s.get_double("chat.timeout");
  b.chat.max_retries = checked_cast<int>(s, "chat.max_retries", 0, 100);
  b.chat.concurrency = checked_cast<int>(s, "chat.concurrency", 1, 1024);
  if (s.has("chat.max_context_chars")) b.chat.max_context_chars = s.get_u64("chat.max_context_chars");
  b.chat.api_key_env = s.get_string("chat.api_key_env");
  b.validate();
  return b;
}

TrainConfig train_from_settings(const Settings& s) {
  TrainConfig c;
  c.gamma = s.get_double("gamma");
  c.rho = s.get_double("rho");
  c.step_budget = checked_cast<int>(s, "step_budget", 1, kBig);
  c.learning_rate = s.get_double("learning_rate");
  c.critic_learning_rate = s.get_optional_double("critic_learning_rate");
  c.weight_decay = s.get_double("weight_decay");
  c.total_updates = checked_cast<int>(s, "total_updates", 0, kBig);
  c.grad_accumulation = checked_cast<int>(s, "grad_accumulation", 1, kBig);
  c.seed = s.get_u64("seed");
  c.checkpoint_interval = checked_cast<int>(s, "checkpoint_interval", 0, kBig);
  c.log_interval = checked_cast<int>(s, "log_interval", 0, kBig);
  c.diagnostics = s.get_bool("diagnostics");
  c.critic.hidden = checked_cast<std::size_t>(s, "critic.hidden", 1, 1 << 16);
  c.critic.heads = checked_cast<std::size_t>(s, "critic.heads", 1, 1 << 10);
  c.critic.history_dim = checked_cast<std::size_t>(s, "critic.history_dim", 1, 1 << 16);
  c.critic.dropout = s.get_double("critic.dropout");
  c.prm = prm_from_settings(s);
  c.prm.seed = c.seed;
  c.backend = backend_from_settings(s);
  c.validate();
  return c;
}

SupervisedConfig supervised_from_settings(const Settings& s) {
  SupervisedConfig c;
  c.learning_rate = s.get_double("learning_rate");
  c.weight_decay = s.get_double("weight_decay");
  c.epochs = checked_cast<int>(s, "epochs", 0, kBig);
  c.batch_size = checked_cast<int>(s, "batch_size", 1, kBig);
  c.seed = s.get_u64("seed");
  c.prm = prm_from_settings(s);
  c.prm.seed = c.seed;
  c.validate();
  return c;
}

std::string dataset_digest(const TrajectoryDataset& ds) {
  std::uint64_t h = 0x2545f4914f6cdd1dULL;
  for (const auto& t : ds.trajectories) {
    h = mix64(h ^ fnv1a64(t.id));
    h = mix64(h ^ fnv1a64(t.problem));
    for (const auto& s : t.steps) h = mix64(h ^ fnv1a64(s));
  }
  return hex64(h);
}

}  // namespace uprm::trainer
