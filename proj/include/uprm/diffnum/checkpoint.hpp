#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "uprm/diffnum/tensor.hpp"

namespace uprm::diffnum {

inline constexpr const char* kCheckpointFormat = "uprm-checkpoint/1";

struct CheckpointHeader {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::string config_hash;
};

/// On disk:
///   {"format": "uprm-checkpoint/1",
///    "header": {"seed": u64, "step": u64, "config_hash": str},
///    "parameters": {"<path>": {"shape": [rows, cols], "values": [row-major...]}},
///    "state": {...}}
/// Doubles are written in shortest round-trip form, so a load restores
/// every value bit for bit.
struct Checkpoint {
  CheckpointHeader header;
  nlohmann::json parameters = nlohmann::json::object();
  nlohmann::json state = nlohmann::json::object();
};

nlohmann::json parameters_to_json(const ParameterList& params);

/// Copies stored values into `params`. Throws DataError on a missing path or
/// shape mismatch.
void load_parameters(const nlohmann::json& stored, const ParameterList& params);

/// Writes to a temporary sibling and renames it into place.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);

/// Throws DataError when the file is missing, unparsable, or lacks a section.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace uprm::diffnum
