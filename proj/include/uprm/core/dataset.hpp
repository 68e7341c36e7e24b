#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include <json.hpp>

#include "uprm/core/trajectory.hpp"

namespace uprm {

/// One JSONL record:
///   {"id": str, "problem": str, "steps": [str, ...],
///    "first_error": int (optional, 1-based, T+1 = correct),
///    "final_answer": str (optional)}
Trajectory trajectory_from_json(const nlohmann::json& record);
nlohmann::json trajectory_to_json(const Trajectory& t);

/// Reads a JSONL trajectory file. Errors cite the offending line number.
/// In unlabeled mode any "first_error" field is validated and then dropped.
TrajectoryDataset load_dataset(const std::filesystem::path& path, LabelMode mode);

/// Parses JSONL from a stream; `source` only appears in error messages.
TrajectoryDataset parse_dataset(std::istream& in, LabelMode mode, std::string_view source);

void save_dataset(const TrajectoryDataset& dataset, const std::filesystem::path& path);
void write_dataset(const TrajectoryDataset& dataset, std::ostream& out);

}  // namespace uprm
