#include "uprm/diffnum/checkpoint.hpp"

#include <fstream>

#include "uprm/errors.hpp"

namespace uprm::diffnum {

using nlohmann::json;

json parameters_to_json(const ParameterList& params) {
  json out = json::object();
  for (const auto& p : params) {
    const auto v = p.tensor.values();
    out[p.name] = {{"shape", {p.tensor.rows(), p.tensor.cols()}}, {"values", std::vector<double>(v.begin(), v.end())}};
  }
  return out;
}

void load_parameters(const json& stored, const ParameterList& params) {
  for (const auto& p : params) {
    const auto it = stored.find(p.name);
    if (it == stored.end()) throw DataError("checkpoint lacks parameter '" + p.name + "'");
    try {
      const auto shape = it->at("shape").get<std::vector<std::size_t>>();
      const auto values = it->at("values").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] != p.tensor.rows() || shape[1] != p.tensor.cols() ||
          values.size() != p.tensor.size()) {
        throw DataError("checkpoint shape mismatch for '" + p.name + "': expected " + p.tensor.shape().str());
      }
      Tensor t = p.tensor;
      std::copy(values.begin(), values.end(), t.mutable_values().begin());
    } catch (const json::exception& e) {
      throw DataError("checkpoint parameter '" + p.name + "': " + e.what());
    }
  }
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  json j = {{"format", kCheckpointFormat},
            {"header",
             {{"seed", checkpoint.header.seed},
              {"step", checkpoint.header.step},
              {"config_hash", checkpoint.header.config_hash}}},
            {"parameters", checkpoint.parameters},
            {"state", checkpoint.state}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + tmp + "'");
    out << j.dump();
    if (!out) throw DataError("failed writing checkpoint '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "' is corrupted: " + e.what());
  }
  Checkpoint c;
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw DataError("checkpoint '" + path.string() + "' has unknown format");
    }
    const auto& h = j.at("header");
    c.header.seed = h.at("seed").get<std::uint64_t>();
    c.header.step = h.at("step").get<std::uint64_t>();
    c.header.config_hash = h.at("config_hash").get<std::string>();
    c.parameters = j.at("parameters");
    c.state = j.value("state", json::object());
  } catch (const json::exception& e) {
    throw DataError("checkpoint '" + path.string() + "' is corrupted: " + e.what());
  }
  return c;
}

}  // namespace uprm::diffnum
