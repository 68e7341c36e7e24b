#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "uprm/scorer/backend.hpp"

namespace uprm::scorer {

/// 128-bit content address of (backend identity, rendered context, slots)
/// as 32 hex characters.
std::string conversation_cache_key(const std::string& identity, const Conversation& conversation);

/// Memoizes another backend. Entries persist to an append-only JSONL file
/// ({"key": ..., "probs": [[p_plus, p_minus], ...]}) when a path is given;
/// doubles are stored in round-trip form so hits are bit-identical.
class CachedBackend : public ScorerBackend {
 public:
  explicit CachedBackend(std::shared_ptr<ScorerBackend> inner,
                         std::optional<std::filesystem::path> file = std::nullopt);

  MarkerProbabilities query_markers(const Conversation& conversation) override;
  std::string identity() const override { return inner_->identity(); }

  std::size_t hits() const;
  std::size_t misses() const;
  std::size_t size() const;
  /// Lines skipped while loading (e.g. a torn final write).
  std::size_t skipped_lines() const noexcept { return skipped_lines_; }

 private:
  std::shared_ptr<ScorerBackend> inner_;
  std::optional<std::filesystem::path> file_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, MarkerProbabilities> entries_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
  std::size_t skipped_lines_ = 0;
};

}  // namespace uprm::scorer
