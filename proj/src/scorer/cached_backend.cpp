#include "uprm/scorer/cached_backend.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "uprm/core/random.hpp"
#include "uprm/errors.hpp"

namespace uprm::scorer {

using nlohmann::json;

std::string conversation_cache_key(const std::string& identity, const Conversation& conversation) {
  std::string material = identity;
  material += '\x1f';
  material += render_chatml(conversation).text;
  for (const auto& slot : conversation.slots) {
    material += '\x1f' + std::to_string(slot.turn_index) + ':' + std::to_string(slot.sequence_index) + ':' +
                std::to_string(slot.step);
  }
  for (const auto& id : conversation.trajectory_ids) material += '\x1e' + id;
  const std::uint64_t lo = fnv1a64(material);
  const std::uint64_t hi = fnv1a64(material, mix64(0x5eedULL));
  char buf[33];
  std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return buf;
}

CachedBackend::CachedBackend(std::shared_ptr<ScorerBackend> inner, std::optional<std::filesystem::path> file)
    : inner_(std::move(inner)), file_(std::move(file)) {
  if (!inner_) throw ConfigError("cached backend needs an inner backend");
  if (!file_ || !std::filesystem::exists(*file_)) return;
  std::ifstream in(*file_);
  if (!in) throw DataError("cannot read cache file '" + file_->string() + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      MarkerProbabilities probs;
      for (const auto& pair : j.at("probs")) probs.push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
      entries_[j.at("key").get<std::string>()] = std::move(probs);
    } catch (const json::exception&) {
      ++skipped_lines_;
    }
  }
}

MarkerProbabilities CachedBackend::query_markers(const Conversation& conversation) {
  const std::string key = conversation_cache_key(inner_->identity(), conversation);
  {
    std::lock_guard lock(mutex_);
    if (const auto it = entries_.find(key); it != entries_.end()) {
      ++hits_;
      return it->second;
    }
  }
  // Query outside the lock; a concurrent duplicate miss just writes the
  // same entry twice.
  MarkerProbabilities probs = inner_->query_markers(conversation);
  std::lock_guard lock(mutex_);
  ++misses_;
  if (entries_.emplace(key, probs).second && file_) {
    if (file_->has_parent_path()) std::filesystem::create_directories(file_->parent_path());
    std::ofstream out(*file_, std::ios::app);
    if (!out) throw DataError("cannot append to cache file '" + file_->string() + "'");
    json pairs = json::array();
    for (const auto& p : probs) pairs.push_back({p.p_plus, p.p_minus});
    out << json{{"key", key}, {"probs", pairs}}.dump() << '\n';
  }
  return probs;
}

std::size_t CachedBackend::hits() const {
  std::lock_guard lock(mutex_);
  return hits_;
}

std::size_t CachedBackend::misses() const {
  std::lock_guard lock(mutex_);
  return misses_;
}

std::size_t CachedBackend::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

}  // namespace uprm::scorer
