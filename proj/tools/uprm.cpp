// uprm: train, evaluate and apply unsupervised process reward models.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uprm/core/dataset.hpp"
#include "uprm/core/random.hpp"
#include "uprm/core/settings.hpp"
#include "uprm/core/synthetic_task.hpp"
#include "uprm/diffnum/checkpoint.hpp"
#include "uprm/errors.hpp"
#include "uprm/evalkit/localization.hpp"
#include "uprm/evalkit/tts.hpp"
#include "uprm/log.hpp"
#include "uprm/packer/packer.hpp"
#include "uprm/prm/model.hpp"
#include "uprm/trainer/config.hpp"
#include "uprm/trainer/trainer.hpp"

#ifndef UPRM_VERSION
#define UPRM_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uprm;

namespace {

// ---- settings <-> flags ---------------------------------------------------

std::string flag_name(const std::string& key) {
  std::string out = "--";
  for (char c : key) out += (c == '.' || c == '_') ? '-' : c;
  return out;
}

/// Registers one string option per schema key; values are applied after
/// the config file so flags win.
struct SchemaFlags {
  SettingSchema schema;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;

  SchemaFlags(CLI::App& app, SettingSchema s) : schema(std::move(s)) {
    app.add_option("--config", config_path, "key = value settings file; flags override it")->check(CLI::ExistingFile);
    for (const auto& spec : schema) {
      auto* opt = app.add_option(flag_name(spec.key), values[spec.key], spec.help);
      opt->default_str(spec.default_value.empty() ? "unset" : spec.default_value);
      options[spec.key] = opt;
    }
  }

  Settings resolve() const {
    Settings s(schema);
    if (!config_path.empty()) s.merge_file(config_path);
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) s.set(key, values.at(key), flag_name(key));
    }
    return s;
  }
};

// ---- output directories ---------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

/// A run directory is filled under "<dir>.partial" and renamed into place,
/// so a directory at the final path is never half-written by its creator.
class StagedDir {
 public:
  explicit StagedDir(fs::path target) : target_(std::move(target)), staging_(target_.string() + ".partial") {
    if (fs::exists(target_)) throw ConfigError("output directory " + target_.string() + " already exists");
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  const fs::path& path() const noexcept { return staging_; }
  const fs::path& target() const noexcept { return target_; }
  void commit() {
    if (committed_) return;
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_, staging_;
  bool committed_ = false;
};

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json base_manifest(const std::string& subcommand, const std::vector<std::string>& argv, const Settings* settings) {
  json m = {{"tool", "uprm"},
            {"version", UPRM_VERSION},
            {"subcommand", subcommand},
            {"argv", argv},
            {"compiler", __VERSION__},
            {"json_library", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                 std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                 std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  if (settings) m["settings"] = settings->to_json();
  return m;
}

/// Writes resolved.cfg and manifest.json into `dir`.
void write_run_record(const fs::path& dir, const Settings* settings, const json& manifest) {
  if (settings) write_text(dir / "resolved.cfg", settings->to_file_text());
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

/// stdout when `path` is empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw DataError("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

// ---- models and data ------------------------------------------------------

prm::PrmModel load_model(const fs::path& path) {
  const auto c = diffnum::read_checkpoint(path);
  prm::PrmConfig pc;
  try {
    const auto& j = c.state.at("config").at("prm");
    pc.features.dim = j.at("feature_dim").get<std::size_t>();
    pc.hidden = j.at("hidden").get<std::size_t>();
    pc.head_hidden = j.at("head_hidden").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": checkpoint lacks the model shape: " + e.what());
  }
  prm::PrmModel model(pc);
  diffnum::load_parameters(c.parameters, model.parameters());
  return model;
}

prm::PredictionConfig prediction_rule(const std::string& rule, double threshold) {
  prm::PredictionConfig p;
  if (rule == "argmax_j") p.rule = prm::PredictionRule::kArgmax;
  else if (rule == "threshold") p.rule = prm::PredictionRule::kThreshold;
  else throw ConfigError("--rule must be argmax_j or threshold, got '" + rule + "'");
  p.threshold = threshold;
  p.validate();
  return p;
}

/// The oracle's fallback answer key: the data file itself, when labeled.
std::optional<TrajectoryDataset> fallback_key(const trainer::BackendConfig& b, const std::string& data_path) {
  if (b.kind != trainer::BackendKind::kOracle || b.answer_key_path) return std::nullopt;
  try {
    return load_dataset(data_path, LabelMode::kLabeled);
  } catch (const DataError& e) {
    throw ConfigError("the oracle backend needs labels: set oracle.answer_key or label " + data_path + " (" +
                      e.what() + ")");
  }
}

std::shared_ptr<scorer::ScorerBackend> backend_for(const trainer::BackendConfig& b, const std::string& data_path) {
  const auto key = fallback_key(b, data_path);
  return trainer::make_backend(b, key ? &*key : nullptr);
}

// ---- training ---------------------------------------------------------------

std::string checkpoint_name(int update) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "update-%06d.json", update);
  return buf;
}

void save_trainer(const trainer::Trainer& t, const fs::path& dir) {
  const auto c = t.checkpoint();
  fs::create_directories(dir / "checkpoints");
  diffnum::write_checkpoint(dir / "checkpoints" / checkpoint_name(t.updates()), c);
  diffnum::write_checkpoint(dir / "checkpoint.json", c);
}

void rewrite_metrics(const fs::path& dir, const std::vector<trainer::UpdateMetrics>& history) {
  fs::remove(dir / "metrics.csv");
  fs::remove(dir / "metrics.jsonl");
  trainer::MetricsWriter w(dir / "metrics.csv", dir / "metrics.jsonl");
  for (const auto& m : history) w.write(m);
}

/// Runs `t` to its configured length inside `dir`. Writes periodic
/// checkpoints, metrics and, on failure, the state needed to continue.
/// Returns the status recorded in the manifest.
std::string drive(trainer::Trainer& t, const fs::path& dir, const fs::path& final_dir, json& manifest) {
  const auto& cfg = t.config();
  trainer::MetricsWriter metrics(dir / "metrics.csv", dir / "metrics.jsonl");
  std::ofstream diagnostics;
  if (cfg.diagnostics) {
    diagnostics.open(dir / "diagnostics.jsonl", std::ios::app);
    t.set_diagnostics_sink(&diagnostics);
  }
  auto finish = [&](const std::string& status) {
    manifest["status"] = status;
    manifest["updates"] = t.updates();
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    return status;
  };
  try {
    t.run([&](const trainer::UpdateMetrics& m) {
      metrics.write(m);
      if (cfg.log_interval > 0 && m.update % cfg.log_interval == 0) {
        std::ostringstream line;
        line << "update " << m.update << "/" << cfg.total_updates << " score " << m.corrected_score << " entropy "
             << m.entropy << "/" << m.uniform_entropy << " critic " << m.critic_loss;
        log::info(line.str());
      }
      if (cfg.checkpoint_interval > 0 && m.update % cfg.checkpoint_interval == 0) save_trainer(t, dir);
    });
  } catch (const BackendError& e) {
    // The trainer rolled back the failed update; its state is consistent.
    save_trainer(t, dir);
    log::error(std::string("backend failure, checkpoint written at update ") + std::to_string(t.updates()) +
               "; continue with `uprm resume --run " + final_dir.string() + "`");
    finish("halted");
    throw;
  } catch (const NumericError&) {
    if (!t.failed_batch().is_null()) write_text(dir / "failed_batch.json", t.failed_batch().dump(2) + "\n");
    finish("failed");
    throw;
  }
  save_trainer(t, dir);
  return finish("complete");
}

json train_manifest(const std::string& sub, const std::vector<std::string>& argv, const Settings& s,
                    const trainer::Trainer& t, const std::string& data_path, const TrajectoryDataset& data) {
  auto m = base_manifest(sub, argv, &s);
  m["seed"] = t.config().seed;
  m["config_hash"] = t.config().hash();
  m["run_hash"] = t.run_hash();
  m["data"] = {{"path", fs::absolute(data_path).string()},
               {"digest", trainer::dataset_digest(data)},
               {"trajectories", data.size()}};
  m["status"] = "running";
  return m;
}

int cmd_train(const SchemaFlags& flags, const std::string& data_path, const std::string& out,
              const std::vector<std::string>& argv) {
  const Settings s = flags.resolve();
  const auto cfg = trainer::train_from_settings(s);
  const auto data = load_dataset(data_path, LabelMode::kUnlabeled);
  auto backend = backend_for(cfg.backend, data_path);
  trainer::Trainer t(cfg, data, backend);
  StagedDir dir(out);
  auto manifest = train_manifest("train", argv, s, t, data_path, data);
  write_run_record(dir.path(), &s, manifest);
  try {
    drive(t, dir.path(), dir.target(), manifest);
  } catch (...) {
    dir.commit();
    throw;
  }
  dir.commit();
  log::info("run written to " + dir.target().string());
  return 0;
}

int cmd_resume(const std::string& run, std::optional<int> total_updates, const std::vector<std::string>& argv) {
  const fs::path dir(run);
  auto manifest = read_json(dir / "manifest.json");
  Settings s(trainer::train_schema());
  s.merge_file(dir / "resolved.cfg");
  const auto cfg = trainer::train_from_settings(s);
  std::string data_path;
  try {
    data_path = manifest.at("data").at("path").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError((dir / "manifest.json").string() + ": " + e.what());
  }
  const auto data = load_dataset(data_path, LabelMode::kUnlabeled);
  if (trainer::dataset_digest(data) != manifest["data"].value("digest", "")) {
    throw DataError(data_path + " changed since the run started");
  }
  trainer::Trainer t(cfg, data, backend_for(cfg.backend, data_path));
  t.restore(diffnum::read_checkpoint(dir / "checkpoint.json"));
  if (total_updates) t.set_total_updates(*total_updates);
  rewrite_metrics(dir, t.history());
  log::info("resuming at update " + std::to_string(t.updates()) + " of " + std::to_string(t.config().total_updates));
  manifest["resumed"].push_back({{"argv", argv}, {"from_update", t.updates()}});
  manifest["total_updates"] = t.config().total_updates;
  drive(t, dir, dir, manifest);
  return 0;
}

int cmd_train_supervised(const SchemaFlags& flags, const std::string& data_path, const std::string& out,
                         const std::vector<std::string>& argv) {
  const Settings s = flags.resolve();
  const auto cfg = trainer::supervised_from_settings(s);
  const auto data = load_dataset(data_path, LabelMode::kLabeled);
  StagedDir dir(out);
  auto manifest = base_manifest("train-supervised", argv, &s);
  manifest["seed"] = cfg.seed;
  manifest["config_hash"] = hex(fnv1a64(cfg.to_json().dump()));
  manifest["data"] = {{"path", fs::absolute(data_path).string()},
                      {"digest", trainer::dataset_digest(data)},
                      {"trajectories", data.size()}};
  write_run_record(dir.path(), &s, manifest);

  std::ofstream epochs(dir.path() / "epochs.csv");
  epochs << "epoch,mean_loss,updates\n";
  const auto r = trainer::train_supervised(cfg, data, [&](const trainer::SupervisedEpoch& e) {
    epochs << e.epoch << ',' << e.mean_loss << ',' << e.updates << '\n';
    log::info("epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.mean_loss));
  });
  epochs.close();

  diffnum::Checkpoint c;
  c.header.seed = cfg.seed;
  c.header.step = r.epochs.size();
  c.header.config_hash = manifest["config_hash"];
  c.parameters = diffnum::parameters_to_json(r.model.parameters());
  c.state = {{"config", cfg.to_json()}};
  diffnum::write_checkpoint(dir.path() / "checkpoint.json", c);
  manifest["status"] = "complete";
  write_text(dir.path() / "manifest.json", manifest.dump(2) + "\n");
  dir.commit();
  log::info("model written to " + (dir.target() / "checkpoint.json").string());
  return 0;
}

int cmd_sweep(const SchemaFlags& flags, const std::vector<double>& gammas, const std::string& data_path,
              const std::string& out, const std::vector<std::string>& argv) {
  const Settings s = flags.resolve();
  const auto base = trainer::train_from_settings(s);
  const auto data = load_dataset(data_path, LabelMode::kUnlabeled);
  const auto key = fallback_key(base.backend, data_path);
  StagedDir dir(out);
  auto manifest = base_manifest("sweep-gamma", argv, &s);
  manifest["seed"] = base.seed;
  manifest["gammas"] = gammas;
  manifest["config_hash"] = base.hash();
  manifest["data"] = {{"path", fs::absolute(data_path).string()}, {"digest", trainer::dataset_digest(data)}};
  write_run_record(dir.path(), &s, manifest);

  std::ofstream curves(dir.path() / "curves.csv");
  curves << "gamma,update,entropy,uniform_entropy,entropy_fraction,raw_score,corrected_score,critic_loss\n";
  curves.precision(17);
  const auto runs = trainer::sweep_gamma(
      base, gammas, data, [&] { return trainer::make_backend(base.backend, key ? &*key : nullptr); },
      [&](double g, const trainer::UpdateMetrics& m) {
        curves << g << ',' << m.update << ',' << m.entropy << ',' << m.uniform_entropy << ','
               << (m.uniform_entropy > 0 ? m.entropy / m.uniform_entropy : 0.0) << ',' << m.raw_score << ','
               << m.corrected_score << ',' << m.critic_loss << '\n';
        if (base.log_interval > 0 && m.update % base.log_interval == 0) {
          log::info("gamma " + std::to_string(g) + " update " + std::to_string(m.update));
        }
      });
  curves.close();
  json summary = json::array();
  for (const auto& r : runs) {
    summary.push_back({{"gamma", r.gamma},
                       {"final_entropy", r.final_entropy.mean_entropy},
                       {"uniform_entropy", r.final_entropy.mean_uniform},
                       {"entropy_fraction", r.final_entropy.fraction()}});
  }
  write_text(dir.path() / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
  manifest["status"] = "complete";
  write_text(dir.path() / "manifest.json", manifest.dump(2) + "\n");
  dir.commit();
  return 0;
}

// ---- evaluation -------------------------------------------------------------

struct EvalArgs {
  std::string data, checkpoint, rule = "argmax_j", output;
  double threshold = 0.5;
  bool judge = false;
};

int cmd_eval(const SchemaFlags& flags, const EvalArgs& a) {
  if (a.checkpoint.empty() && !a.judge) throw ConfigError("eval needs --checkpoint, --judge, or both");
  const auto rule = prediction_rule(a.rule, a.threshold);
  const auto data = load_dataset(a.data, LabelMode::kLabeled);
  json report = {{"data", a.data}, {"trajectories", data.size()}};
  if (!a.checkpoint.empty()) {
    const auto model = load_model(a.checkpoint);
    report["prm"] = evalkit::to_json(evalkit::evaluate_prm(model, data, rule).report);
    report["prm"]["checkpoint"] = a.checkpoint;
    if (rule.rule == prm::PredictionRule::kThreshold) report["prm"]["threshold"] = rule.threshold;
  }
  if (a.judge) {
    const Settings s = flags.resolve();
    const auto b = trainer::backend_from_settings(s);
    auto backend = backend_for(b, a.data);
    report["judge"] = evalkit::to_json(evalkit::evaluate_judge(*backend, data).report);
    report["judge"]["backend"] = backend->identity();
  }
  Output out(a.output);
  out.stream() << report.dump(2) << '\n';
  return 0;
}

int cmd_score(const std::string& checkpoint, const std::string& data_path, const std::string& rule_name,
              double threshold, const std::string& output) {
  const auto rule = prediction_rule(rule_name, threshold);
  const auto model = load_model(checkpoint);
  const auto data = load_dataset(data_path, LabelMode::kUnlabeled);
  Output out(output);
  for (const auto& t : data.trajectories) {
    const auto o = model.forward(t);
    out.stream() << json{{"id", t.id},
                         {"step_probs", o.step_probs},
                         {"first_error_pred", prm::predict_first_error(o, rule).value()}}
                        .dump()
                 << '\n';
  }
  return 0;
}

struct VerifyArgs {
  std::string candidates, checkpoint, strategy = "bon", agg = "last", output, scorer = "prm";
  int problems = 20, depth = 6;
  std::size_t width = 4, beams = 4;
  double flaw_rate = 0.4;
  std::uint64_t seed = 0;
};

evalkit::StepScorer oracle_chain_scorer() {
  return [](const std::string& problem, const std::vector<std::string>& steps) {
    std::vector<double> out;
    std::vector<std::string> prefix;
    bool ok = true;
    for (const auto& s : steps) {
      ok = ok && evalkit::SyntheticTreeGenerator::is_sound(problem, prefix, s);
      out.push_back(ok ? 1.0 : 0.0);
      prefix.push_back(s);
    }
    return out;
  };
}

int cmd_verify(const VerifyArgs& a) {
  const auto agg = evalkit::parse_aggregation(a.agg);
  json result = {{"strategy", a.strategy}, {"aggregation", evalkit::aggregation_name(agg)}};
  json rows = json::array();
  std::size_t graded = 0, correct = 0;
  std::optional<prm::PrmModel> model;
  if (!a.checkpoint.empty()) model.emplace(load_model(a.checkpoint));

  if (a.strategy == "bon" || a.strategy == "majority") {
    if (a.candidates.empty()) throw ConfigError("--strategy " + a.strategy + " needs --candidates");
    auto problems = evalkit::load_candidates(a.candidates);
    for (auto& p : problems) {
      std::size_t pick = 0;
      if (a.strategy == "bon") {
        const bool scored = std::all_of(p.candidates.begin(), p.candidates.end(),
                                        [](const evalkit::Candidate& c) { return c.step_scores.has_value(); });
        if (model) evalkit::score_candidates(*model, p);
        else if (!scored) throw ConfigError("candidates of '" + p.problem_id + "' lack step_scores; pass --checkpoint");
        pick = evalkit::best_of_n(p, agg);
      } else {
        pick = evalkit::majority_vote(p);
      }
      json row = {{"problem_id", p.problem_id}, {"selected", pick}};
      if (p.candidates[pick].final_answer) row["final_answer"] = *p.candidates[pick].final_answer;
      if (p.gold_answer) {
        const bool ok = evalkit::is_correct(p, p.candidates[pick]);
        row["correct"] = ok;
        ++graded;
        correct += ok;
      }
      rows.push_back(row);
    }
    std::vector<evalkit::CandidateProblem> gold;
    for (const auto& p : problems) {
      if (p.gold_answer) gold.push_back(p);
    }
    if (!gold.empty()) result["pass_at_n"] = evalkit::pass_at_n(gold);
  } else if (a.strategy == "dvts") {
    if (!a.candidates.empty()) throw ConfigError("--strategy dvts searches synthetic problems; drop --candidates");
    evalkit::StepScorer scorer;
    if (a.scorer == "oracle") scorer = oracle_chain_scorer();
    else if (a.scorer == "prm") {
      if (!model) throw ConfigError("--strategy dvts --scorer prm needs --checkpoint");
      scorer = evalkit::prm_step_scorer(*model);
    } else {
      throw ConfigError("--scorer must be prm or oracle");
    }
    if (a.problems < 1 || a.depth < 1) throw ConfigError("--problems and --depth must be positive");
    Rng rng(a.seed);
    for (int i = 0; i < a.problems; ++i) {
      const auto problem = evalkit::SyntheticTreeGenerator::make_problem(static_cast<long>(rng.below(100)), a.depth,
                                                                         rng.next_u64());
      evalkit::SyntheticTreeGenerator gen(a.flaw_rate);
      const auto r = evalkit::dvts_lite(problem, gen, scorer,
                                        {.width = a.width, .beams = a.beams, .rule = agg, .seed = a.seed + i});
      const auto gold = evalkit::SyntheticTreeGenerator::correct_answer(problem);
      const auto& pick = r.finished[r.selected];
      const bool ok = pick.final_answer && *pick.final_answer == gold;
      rows.push_back({{"problem_id", "chain-" + std::to_string(i)},
                      {"problem", problem},
                      {"finished", r.finished.size()},
                      {"selected", r.selected},
                      {"final_answer", pick.final_answer.value_or("")},
                      {"gold_answer", gold},
                      {"correct", ok}});
      ++graded;
      correct += ok;
    }
  } else {
    throw ConfigError("--strategy must be bon, majority or dvts");
  }
  result["problems"] = rows;
  if (graded > 0) result["accuracy"] = static_cast<double>(correct) / static_cast<double>(graded);
  Output out(a.output);
  out.stream() << result.dump(2) << '\n';
  return 0;
}

int cmd_export(const std::string& checkpoint, const std::string& candidates, double temperature,
               const std::string& output) {
  const auto model = load_model(checkpoint);
  const auto problems = evalkit::load_candidates(candidates);
  const auto records = evalkit::export_step_rewards(model, problems, temperature);
  Output out(output);
  for (const auto& r : records) out.stream() << evalkit::to_json(r).dump() << '\n';
  return 0;
}

int cmd_pack_preview(const std::string& data_path, std::uint64_t seed, int budget, int batches) {
  const auto data = load_dataset(data_path, LabelMode::kUnlabeled);
  packer::Packer p(data, budget, trainer::packer_seed(seed));
  const auto list = [&] {
    if (batches <= 0) return p.rest_of_epoch();
    std::vector<packer::PackedBatch> out;
    for (int i = 0; i < batches; ++i) out.push_back(p.next());
    return out;
  }();
  for (const auto& b : list) {
    std::cout << "epoch " << b.epoch << " batch " << b.index_in_epoch << " steps " << b.total_steps << " n "
              << b.trajectories.size() << (b.final_in_epoch ? " final" : "") << ":";
    for (std::size_t i = 0; i < b.trajectories.size(); ++i) {
      const auto& t = b.trajectories[i];
      std::cout << ' ' << t.id << '(' << t.num_steps();
      if (i + 1 == b.trajectories.size() && b.truncation) std::cout << '/' << b.truncation->original_steps;
      std::cout << ')';
    }
    std::cout << '\n';
  }
  return 0;
}

int cmd_synth(const SyntheticTaskConfig& c, bool unlabeled, const std::string& output) {
  auto data = generate_synthetic_task(c);
  if (unlabeled) data = data.without_labels();
  Output out(output);
  write_dataset(data, out.stream());
  return 0;
}

log::Level parse_level(const std::string& s) {
  if (s == "debug") return log::Level::kDebug;
  if (s == "info") return log::Level::kInfo;
  if (s == "warn") return log::Level::kWarn;
  if (s == "error") return log::Level::kError;
  if (s == "off") return log::Level::kOff;
  throw ConfigError("--log-level must be debug, info, warn, error or off");
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Unsupervised process reward models: training, evaluation and verification.\n"
               "Exit codes: 0 ok, 2 configuration, 3 data, 4 backend, 5 numeric."};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "debug | info | warn | error | off")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train a PRM from unlabeled trajectories with a judge backend");
  SchemaFlags train_flags(*train, trainer::train_schema());
  std::string train_data, train_out;
  train->add_option("--data", train_data, "trajectory JSONL (labels are ignored)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "new run directory")->required();

  // train-supervised
  auto* sup = app.add_subcommand("train-supervised", "Fit a PRM to first-error labels (baseline)");
  SchemaFlags sup_flags(*sup, trainer::supervised_schema());
  std::string sup_data, sup_out;
  sup->add_option("--data", sup_data, "labeled trajectory JSONL")->required()->check(CLI::ExistingFile);
  sup->add_option("--out", sup_out, "new run directory")->required();

  // resume
  auto* resume = app.add_subcommand("resume", "Continue a train run from its latest checkpoint");
  std::string resume_run;
  std::optional<int> resume_total;
  resume->add_option("--run", resume_run, "run directory written by train")->required()->check(CLI::ExistingDirectory);
  resume->add_option("--total-updates", resume_total, "extend or shorten the run (default: as configured)");

  // sweep-gamma
  auto* sweep = app.add_subcommand("sweep-gamma", "One training run per entropy weight; writes combined curves");
  SchemaFlags sweep_flags(*sweep, trainer::train_schema());
  std::vector<double> gammas;
  std::string sweep_data, sweep_out;
  sweep->add_option("gammas", gammas, "entropy weights, e.g. 1 3 9")->required();
  sweep->add_option("--data", sweep_data, "trajectory JSONL")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", sweep_out, "new output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "First-error localization on labeled data");
  SchemaFlags eval_flags(*eval, trainer::backend_schema());
  EvalArgs ea;
  eval->add_option("--data", ea.data, "labeled trajectory JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", ea.checkpoint, "PRM checkpoint")->check(CLI::ExistingFile);
  eval->add_option("--rule", ea.rule, "argmax_j | threshold")->capture_default_str();
  eval->add_option("--threshold", ea.threshold, "step-correctness threshold for --rule threshold")
      ->capture_default_str();
  eval->add_flag("--judge", ea.judge, "also evaluate the argmax judge on the configured backend");
  eval->add_option("--output", ea.output, "report file (default: stdout)");

  // score
  auto* score = app.add_subcommand("score", "Per-step probabilities and predicted first error as JSONL");
  std::string score_ckpt, score_data, score_rule = "argmax_j", score_out;
  double score_threshold = 0.5;
  score->add_option("--checkpoint", score_ckpt, "PRM checkpoint")->required()->check(CLI::ExistingFile);
  score->add_option("--data", score_data, "trajectory JSONL")->required()->check(CLI::ExistingFile);
  score->add_option("--rule", score_rule, "argmax_j | threshold")->capture_default_str();
  score->add_option("--threshold", score_threshold, "threshold for --rule threshold")->capture_default_str();
  score->add_option("--output", score_out, "JSONL file (default: stdout)");

  // verify
  auto* verify = app.add_subcommand(
      "verify", "Pick a response per problem.\n  bon, majority: need --candidates; bon scores with --checkpoint unless "
                "the file has step_scores.\n  dvts: searches synthetic chain problems; no --candidates.");
  VerifyArgs va;
  verify->add_option("--strategy", va.strategy, "bon | majority | dvts")->capture_default_str();
  verify->add_option("--agg", va.agg, "last | product | min")->capture_default_str();
  verify->add_option("--candidates", va.candidates, "candidate JSONL")->check(CLI::ExistingFile);
  verify->add_option("--checkpoint", va.checkpoint, "PRM checkpoint")->check(CLI::ExistingFile);
  verify->add_option("--scorer", va.scorer, "dvts step scorer: prm | oracle")->capture_default_str();
  verify->add_option("--problems", va.problems, "dvts: synthetic problems")->capture_default_str();
  verify->add_option("--depth", va.depth, "dvts: steps per problem")->capture_default_str();
  verify->add_option("--width", va.width, "dvts: kept prefixes and proposals per prefix")->capture_default_str();
  verify->add_option("--beams", va.beams, "dvts: independent subtrees")->capture_default_str();
  verify->add_option("--flaw-rate", va.flaw_rate, "dvts: share of flawed proposals")->capture_default_str();
  verify->add_option("--seed", va.seed, "dvts: problem and proposal seed")->capture_default_str();
  verify->add_option("--output", va.output, "selection JSON (default: stdout)");

  // export-rewards
  auto* exp = app.add_subcommand("export-rewards", "Per-step rewards with a softmin accumulated reward");
  std::string exp_ckpt, exp_cands, exp_out;
  double temperature = 0.1;
  exp->add_option("--checkpoint", exp_ckpt, "PRM checkpoint")->required()->check(CLI::ExistingFile);
  exp->add_option("--candidates", exp_cands, "candidate JSONL")->required()->check(CLI::ExistingFile);
  exp->add_option("--temperature", temperature, "softmin temperature")->capture_default_str();
  exp->add_option("--output", exp_out, "JSONL file (default: stdout)");

  // pack-preview
  auto* pack = app.add_subcommand("pack-preview", "Print packed batch compositions");
  std::string pack_data;
  std::uint64_t pack_seed = 0;
  int pack_budget = packer::kDefaultStepBudget, pack_batches = 0;
  pack->add_option("--data", pack_data, "trajectory JSONL")->required()->check(CLI::ExistingFile);
  pack->add_option("--seed", pack_seed, "run seed (as in train)")->capture_default_str();
  pack->add_option("--step-budget", pack_budget, "reasoning steps per batch")->capture_default_str();
  pack->add_option("--batches", pack_batches, "batches to print (0: first epoch)")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate the synthetic reasoning task as JSONL");
  SyntheticTaskConfig sc;
  bool synth_unlabeled = false;
  std::string synth_out;
  synth->add_option("--count", sc.count, "trajectories")->capture_default_str();
  synth->add_option("--seed", sc.seed, "generator seed")->capture_default_str();
  synth->add_option("--min-steps", sc.min_steps, "shortest trajectory")->capture_default_str();
  synth->add_option("--max-steps", sc.max_steps, "longest trajectory")->capture_default_str();
  synth->add_option("--later-flaw-rate", sc.later_flaw_rate, "flaw rate after the first error")
      ->capture_default_str();
  synth->add_option("--id-prefix", sc.id_prefix, "id prefix")->capture_default_str();
  synth->add_flag("--unlabeled", synth_unlabeled, "omit first-error labels");
  synth->add_option("--output", synth_out, "JSONL file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::kConfig);
  }

  try {
    log::set_level(parse_level(log_level));
    if (*train) return cmd_train(train_flags, train_data, train_out, args);
    if (*sup) return cmd_train_supervised(sup_flags, sup_data, sup_out, args);
    if (*resume) return cmd_resume(resume_run, resume_total, args);
    if (*sweep) return cmd_sweep(sweep_flags, gammas, sweep_data, sweep_out, args);
    if (*eval) return cmd_eval(eval_flags, ea);
    if (*score) return cmd_score(score_ckpt, score_data, score_rule, score_threshold, score_out);
    if (*verify) return cmd_verify(va);
    if (*exp) return cmd_export(exp_ckpt, exp_cands, temperature, exp_out);
    if (*pack) return cmd_pack_preview(pack_data, pack_seed, pack_budget, pack_batches);
    if (*synth) return cmd_synth(sc, synth_unlabeled, synth_out);
  } catch (const Error& e) {
    log::error(e.what());
    return static_cast<int>(e.code());
  } catch (const json::exception& e) {
    log::error(std::string("malformed JSON: ") + e.what());
    return static_cast<int>(ExitCode::kData);
  } catch (const fs::filesystem_error& e) {
    log::error(e.what());
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    log::error(std::string("internal error: ") + e.what());
    return 1;
  }
  return 0;
}
