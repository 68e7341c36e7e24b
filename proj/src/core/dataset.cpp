#include "uprm/core/dataset.hpp"

#include <fstream>
#include <sstream>

#include "uprm/errors.hpp"

namespace uprm {

using nlohmann::json;

Trajectory trajectory_from_json(const json& record) {
  if (!record.is_object()) {
    throw DataError("record is not a JSON object");
  }
  Trajectory t;
  auto require_string = [&](const char* key) -> std::string {
    const auto it = record.find(key);
    if (it == record.end() || !it->is_string()) {
      throw DataError(std::string("missing or non-string field '") + key + "'");
    }
    return it->get<std::string>();
  };
  t.id = require_string("id");
  t.problem = require_string("problem");

  const auto steps = record.find("steps");
  if (steps == record.end() || !steps->is_array()) {
    throw DataError("missing or non-array field 'steps'");
  }
  for (const auto& s : *steps) {
    if (!s.is_string()) throw DataError("non-string entry in 'steps'");
    t.steps.push_back(s.get<std::string>());
  }
  if (const auto it = record.find("first_error"); it != record.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw DataError("'first_error' must be an integer");
    t.gold_first_error = it->get<int>();
  }
  if (const auto it = record.find("final_answer"); it != record.end() && !it->is_null()) {
    if (!it->is_string()) throw DataError("'final_answer' must be a string");
    t.final_answer = it->get<std::string>();
  }
  t.validate();
  return t;
}

json trajectory_to_json(const Trajectory& t) {
  json j = {{"id", t.id}, {"problem", t.problem}, {"steps", t.steps}};
  if (t.gold_first_error) j["first_error"] = *t.gold_first_error;
  if (t.final_answer) j["final_answer"] = *t.final_answer;
  return j;
}

TrajectoryDataset parse_dataset(std::istream& in, LabelMode mode, std::string_view source) {
  TrajectoryDataset ds;
  ds.source_path = std::string(source);
  ds.label_mode = mode;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      Trajectory t = trajectory_from_json(json::parse(line));
      if (mode == LabelMode::kUnlabeled) {
        t.gold_first_error.reset();
      } else if (!t.gold_first_error) {
        throw DataError("labeled dataset record has no 'first_error'");
      }
      ds.trajectories.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw DataError(std::string(source) + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    } catch (const DataError& e) {
      throw DataError(std::string(source) + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  ds.validate();
  return ds;
}

TrajectoryDataset load_dataset(const std::filesystem::path& path, LabelMode mode) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open dataset '" + path.string() + "'");
  }
  return parse_dataset(in, mode, path.string());
}

void write_dataset(const TrajectoryDataset& dataset, std::ostream& out) {
  for (const auto& t : dataset.trajectories) {
    out << trajectory_to_json(t).dump() << '\n';
  }
}

void save_dataset(const TrajectoryDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset '" + path.string() + "'");
  write_dataset(dataset, out);
}

}  // namespace uprm
