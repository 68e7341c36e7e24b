#include "uprm/trainer/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "uprm/errors.hpp"
#include "uprm/log.hpp"
#include "uprm/scorer/score.hpp"

namespace uprm::trainer {

using diffnum::Tensor;

bool UpdateMetrics::same_trajectory(const UpdateMetrics& o) const {
  return update == o.update && raw_score == o.raw_score && corrected_score == o.corrected_score &&
         entropy == o.entropy && uniform_entropy == o.uniform_entropy && critic_loss == o.critic_loss &&
         grad_norm == o.grad_norm && advantage_variance == o.advantage_variance && trajectories == o.trajectories &&
         corner_fraction_pct == o.corner_fraction_pct && applied == o.applied;
}

nlohmann::json to_json(const UpdateMetrics& m) {
  return {{"update", m.update},
          {"raw_score", m.raw_score},
          {"corrected_score", m.corrected_score},
          {"entropy", m.entropy},
          {"uniform_entropy", m.uniform_entropy},
          {"critic_loss", m.critic_loss},
          {"grad_norm", m.grad_norm},
          {"advantage_variance", m.advantage_variance},
          {"trajectories", m.trajectories},
          {"corner_fraction_pct", m.corner_fraction_pct},
          {"applied", m.applied},
          {"wall_seconds", m.wall_seconds}};
}

UpdateMetrics update_metrics_from_json(const nlohmann::json& j) {
  try {
    UpdateMetrics m;
    m.update = j.at("update").get<int>();
    m.raw_score = j.at("raw_score").get<double>();
    m.corrected_score = j.at("corrected_score").get<double>();
    m.entropy = j.at("entropy").get<double>();
    m.uniform_entropy = j.at("uniform_entropy").get<double>();
    m.critic_loss = j.at("critic_loss").get<double>();
    m.grad_norm = j.at("grad_norm").get<double>();
    m.advantage_variance = j.at("advantage_variance").get<double>();
    m.trajectories = j.at("trajectories").get<int>();
    m.corner_fraction_pct = j.at("corner_fraction_pct").get<int>();
    m.applied = j.at("applied").get<bool>();
    m.wall_seconds = j.at("wall_seconds").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad metrics record: ") + e.what());
  }
}

const char* metrics_csv_header() {
  return "update,raw_score,corrected_score,entropy,uniform_entropy,critic_loss,grad_norm,advantage_variance,"
         "trajectories,corner_fraction_pct,applied,wall_seconds";
}

std::string to_csv_row(const UpdateMetrics& m) {
  std::ostringstream out;
  out.precision(17);
  out << m.update << ',' << m.raw_score << ',' << m.corrected_score << ',' << m.entropy << ',' << m.uniform_entropy
      << ',' << m.critic_loss << ',' << m.grad_norm << ',' << m.advantage_variance << ',' << m.trajectories << ','
      << m.corner_fraction_pct << ',' << (m.applied ? 1 : 0) << ',' << m.wall_seconds;
  return out.str();
}

MetricsWriter::MetricsWriter(const std::filesystem::path& csv, const std::filesystem::path& jsonl)
    : csv_(csv), jsonl_(jsonl) {
  const bool fresh = !std::filesystem::exists(csv_) || std::filesystem::file_size(csv_) == 0;
  std::ofstream out(csv_, std::ios::app);
  if (!out) throw DataError("cannot write metrics file " + csv_.string());
  if (fresh) out << metrics_csv_header() << '\n';
  std::ofstream(jsonl_, std::ios::app);
}

void MetricsWriter::write(const UpdateMetrics& m) {
  std::ofstream csv(csv_, std::ios::app);
  std::ofstream jsonl(jsonl_, std::ios::app);
  if (!csv || !jsonl) throw DataError("cannot append to metrics files");
  csv << to_csv_row(m) << '\n';
  jsonl << to_json(m).dump() << '\n';
}

namespace {

estimator::CriticConfig critic_config(const TrainConfig& c) {
  estimator::CriticConfig cc;
  cc.history_dim = c.critic.history_dim;
  cc.context_dim = c.prm.hidden;
  cc.hidden = c.critic.hidden;
  cc.heads = c.critic.heads;
  cc.dropout = c.critic.dropout;
  cc.seed = mix64(c.seed ^ 0xc417ULL);
  return cc;
}

TrainConfig validated(TrainConfig c) {
  c.prm.seed = c.seed;
  c.validate();
  return c;
}

TrajectoryDataset unlabeled_copy(const TrajectoryDataset& data) {
  if (data.trajectories.empty()) throw DataError("training data is empty");
  return data.without_labels();
}

}  // namespace

std::uint64_t packer_seed(std::uint64_t run_seed) noexcept { return mix64(run_seed ^ 0x9ac4ULL); }

Trainer::Trainer(TrainConfig config, const TrajectoryDataset& data, std::shared_ptr<scorer::ScorerBackend> backend)
    : config_(validated(std::move(config))),
      data_(unlabeled_copy(data)),
      backend_(std::move(backend)),
      model_(config_.prm),
      critic_(critic_config(config_)),
      summarizer_(config_.prm.hidden, config_.critic.history_dim, mix64(config_.seed ^ 0x5077ULL)),
      prm_opt_(model_.parameters(), {.learning_rate = config_.learning_rate, .weight_decay = config_.weight_decay}),
      critic_opt_(critic_.parameters(), {.learning_rate = config_.critic_lr(), .weight_decay = config_.weight_decay}),
      packer_(data_, config_.step_budget, packer_seed(config_.seed)),
      sample_rng_(mix64(config_.seed ^ 0x5a3dULL)),
      dropout_rng_(mix64(config_.seed ^ 0xd209ULL)) {
  if (!backend_) throw ConfigError("trainer needs a scorer backend");
}

std::string Trainer::run_hash() const { return config_.hash() + "-" + dataset_digest(data_); }

void Trainer::set_total_updates(int n) {
  if (n < 0) throw ConfigError("total_updates must be >= 0");
  config_.total_updates = n;
}

Trainer::BatchResult Trainer::process_batch(const packer::PackedBatch& batch, double weight) {
  const auto& trajs = batch.trajectories;
  const std::size_t N = trajs.size();
  BatchResult r;

  std::vector<prm::PrmGraph> graphs;
  std::vector<FirstErrorDistribution> dists;
  std::vector<FirstErrorPosition> positions;
  estimator::Rows context;
  graphs.reserve(N);
  for (const auto& t : trajs) {
    graphs.push_back(model_.forward_graph(t));
    const auto out = prm::to_output(graphs.back());
    dists.push_back(out.distribution);
    positions.push_back(prm::sample_position(out.distribution, sample_rng_));
    const auto g = graphs.back().final_hidden.values();
    context.emplace_back(g.begin(), g.end());
    r.entropy_sum += out.entropy;
    r.uniform_sum += std::log(static_cast<double>(t.num_steps() + 1));
    r.corners += positions.back().is_corner() ? 1 : 0;
  }

  const auto joint = scorer::score_joint(*backend_, trajs, positions, config_.rho);
  r.raw = joint.raw;
  r.corrected = joint.corrected;
  const auto returns =
      estimator::compute_returns(estimator::joint_rewards(joint.conditional_scores, joint.correction.value));

  std::vector<double> baselines;
  for (std::size_t m = 0; m < N; ++m) {
    const std::span<const Trajectory> hist(trajs.data(), m);
    const std::span<const FirstErrorPosition> hpos(positions.data(), m);
    const auto cand = scorer::candidate_scores(*backend_, hist, hpos, trajs[m]);
    const auto rewards = estimator::candidate_rewards(cand, hpos, N, config_.rho);
    baselines.push_back(estimator::immediate_baseline(rewards, dists[m].probs()));
  }

  const auto history = summarizer_.summarize(context, positions, joint.conditional_scores);
  Rng no_dropout(0);
  const Tensor v_eval = critic_.values(history, context, false, no_dropout);
  std::vector<double> values(v_eval.values().begin(), v_eval.values().end());
  values.back() = 0.0;
  const auto advantages = estimator::compute_advantages(returns, baselines, values);

  std::vector<Tensor> selected;
  Tensor entropy_total;
  for (std::size_t m = 0; m < N; ++m) {
    selected.push_back(diffnum::element(graphs[m].log_p, static_cast<std::size_t>(positions[m].value() - 1), 0));
    entropy_total = entropy_total.defined() ? diffnum::add(entropy_total, graphs[m].entropy) : graphs[m].entropy;
  }
  const Tensor objective = diffnum::add(estimator::surrogate_objective(selected, advantages),
                                        diffnum::scale(entropy_total, config_.gamma / static_cast<double>(N)));
  const Tensor closs = estimator::critic_loss(returns, critic_.values(history, context, true, dropout_rng_));

  for (const auto& a : advantages) r.advantages.push_back(a.total);
  r.critic_loss = closs.item();

  estimator::BatchDiagnostics diag;
  if (diagnostics_ || !std::isfinite(objective.item()) || !std::isfinite(r.critic_loss)) {
    for (std::size_t m = 0; m < N; ++m) {
      diag.trajectory_ids.push_back(trajs[m].id);
      diag.positions.push_back(positions[m].value());
    }
    diag.scores = joint.conditional_scores;
    diag.baselines = baselines;
    diag.critic_values = values;
    diag.advantages = advantages;
  }
  if (!std::isfinite(objective.item()) || !std::isfinite(r.critic_loss)) {
    failed_batch_ = estimator::to_json(diag);
    failed_batch_["objective"] = std::isfinite(objective.item()) ? nlohmann::json(objective.item()) : nlohmann::json("non-finite");
    failed_batch_["critic_loss"] = std::isfinite(r.critic_loss) ? nlohmann::json(r.critic_loss) : nlohmann::json("non-finite");
    throw NumericError("non-finite training objective in batch " + std::to_string(batch.index_in_epoch) +
                       " of epoch " + std::to_string(batch.epoch));
  }
  if (diagnostics_) {
    auto j = estimator::to_json(diag);
    j["update"] = updates() + 1;
    j["epoch"] = batch.epoch;
    j["batch"] = batch.index_in_epoch;
    *diagnostics_ << j.dump() << '\n';
  }

  diffnum::scale(objective, -weight).backward();
  diffnum::scale(closs, weight).backward();
  return r;
}

UpdateMetrics Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const Snapshot snapshot{sample_rng_, dropout_rng_, packer_.state()};
  prm_opt_.zero_grad();
  critic_opt_.zero_grad();

  UpdateMetrics m;
  m.update = updates() + 1;
  std::vector<double> advantages;
  double uniform = 0.0;
  int corners = 0;
  const double weight = 1.0 / static_cast<double>(config_.grad_accumulation);
  try {
    for (int a = 0; a < config_.grad_accumulation; ++a) {
      const auto batch = packer_.next();
      const auto r = process_batch(batch, weight);
      m.raw_score += r.raw * weight;
      m.corrected_score += r.corrected * weight;
      m.critic_loss += r.critic_loss * weight;
      m.entropy += r.entropy_sum;
      uniform += r.uniform_sum;
      corners += r.corners;
      m.trajectories += static_cast<int>(batch.trajectories.size());
      advantages.insert(advantages.end(), r.advantages.begin(), r.advantages.end());
    }
  } catch (const BackendError&) {
    prm_opt_.zero_grad();
    critic_opt_.zero_grad();
    sample_rng_ = snapshot.sample_rng;
    dropout_rng_ = snapshot.dropout_rng;
    packer_.restore(snapshot.packer);
    throw;
  }
  m.entropy /= m.trajectories;
  m.uniform_entropy = uniform / m.trajectories;
  m.corner_fraction_pct = static_cast<int>(std::lround(100.0 * corners / m.trajectories));
  const double mean = std::accumulate(advantages.begin(), advantages.end(), 0.0) / static_cast<double>(advantages.size());
  for (double a : advantages) m.advantage_variance += (a - mean) * (a - mean);
  m.advantage_variance /= static_cast<double>(advantages.size());

  m.grad_norm = diffnum::grad_norm(model_.parameters());
  const auto outcome = prm_opt_.step();
  m.applied = outcome.applied;
  if (!outcome.applied) log::warn("update " + std::to_string(m.update) + " skipped: " + outcome.skipped_reason);
  critic_opt_.step();
  prm_opt_.zero_grad();
  critic_opt_.zero_grad();

  m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  history_.push_back(m);
  return m;
}

void Trainer::run(const std::function<void(const UpdateMetrics&)>& on_update) {
  while (updates() < config_.total_updates) {
    const auto m = step();
    if (on_update) on_update(m);
  }
}

diffnum::Checkpoint Trainer::checkpoint() const {
  diffnum::Checkpoint c;
  c.header.seed = config_.seed;
  c.header.step = static_cast<std::uint64_t>(updates());
  c.header.config_hash = run_hash();
  auto params = model_.parameters();
  for (const auto& p : critic_.parameters()) params.push_back(p);
  c.parameters = diffnum::parameters_to_json(params);
  nlohmann::json metrics = nlohmann::json::array();
  for (const auto& m : history_) metrics.push_back(to_json(m));
  c.state = {{"prm_optimizer", prm_opt_.state_to_json()},
             {"critic_optimizer", critic_opt_.state_to_json()},
             {"sample_rng", sample_rng_.serialize()},
             {"dropout_rng", dropout_rng_.serialize()},
             {"packer", packer::to_json(packer_.state())},
             {"metrics", metrics},
             {"config", config_.to_json()}};
  return c;
}

void Trainer::restore(const diffnum::Checkpoint& c) {
  if (c.header.config_hash != run_hash()) {
    throw ConfigError("checkpoint was written by a different configuration or dataset (hash " + c.header.config_hash +
                      ", current " + run_hash() + ")");
  }
  auto params = model_.parameters();
  for (const auto& p : critic_.parameters()) params.push_back(p);
  diffnum::load_parameters(c.parameters, params);
  try {
    prm_opt_.load_state(c.state.at("prm_optimizer"));
    critic_opt_.load_state(c.state.at("critic_optimizer"));
    sample_rng_.deserialize(c.state.at("sample_rng").get<std::string>());
    dropout_rng_.deserialize(c.state.at("dropout_rng").get<std::string>());
    packer_.restore(packer::packer_state_from_json(c.state.at("packer")));
    history_.clear();
    for (const auto& m : c.state.at("metrics")) history_.push_back(update_metrics_from_json(m));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("incomplete checkpoint state: ") + e.what());
  }
  if (history_.size() != c.header.step) throw DataError("checkpoint metrics do not match its step count");
}

EntropySummary summarize_entropy(const prm::PrmModel& model, const TrajectoryDataset& data) {
  EntropySummary s;
  if (data.trajectories.empty()) return s;
  for (const auto& t : data.trajectories) {
    s.mean_entropy += model.forward(t).entropy;
    s.mean_uniform += std::log(static_cast<double>(t.num_steps() + 1));
  }
  s.mean_entropy /= static_cast<double>(data.size());
  s.mean_uniform /= static_cast<double>(data.size());
  return s;
}

SupervisedResult train_supervised(const SupervisedConfig& config, const TrajectoryDataset& labeled,
                                  const std::function<void(const SupervisedEpoch&)>& on_epoch) {
  config.validate();
  if (labeled.trajectories.empty()) throw DataError("supervised training data is empty");
  for (const auto& t : labeled.trajectories) {
    if (!t.gold_first_error) throw DataError("trajectory '" + t.id + "' has no first-error label");
  }
  prm::PrmConfig pc = config.prm;
  pc.seed = config.seed;
  SupervisedResult result{prm::PrmModel(pc), {}};
  diffnum::AdamW opt(result.model.parameters(), {.learning_rate = config.learning_rate, .weight_decay = config.weight_decay});
  Rng rng(mix64(config.seed ^ 0x5afeULL));
  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t B = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    SupervisedEpoch e;
    e.epoch = epoch;
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t end = std::min(order.size(), start + B);
      opt.zero_grad();
      Tensor loss;
      for (std::size_t k = start; k < end; ++k) {
        const Tensor l = prm::supervised_loss(result.model, labeled.trajectories[order[k]]);
        total += l.item();
        loss = loss.defined() ? diffnum::add(loss, l) : l;
      }
      diffnum::scale(loss, 1.0 / static_cast<double>(end - start)).backward();
      opt.step();
      ++e.updates;
    }
    opt.zero_grad();
    e.mean_loss = total / static_cast<double>(order.size());
    result.epochs.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return result;
}

std::vector<SweepRun> sweep_gamma(const TrainConfig& base, const std::vector<double>& gammas,
                                  const TrajectoryDataset& data,
                                  const std::function<std::shared_ptr<scorer::ScorerBackend>()>& make_backend,
                                  const std::function<void(double, const UpdateMetrics&)>& on_update) {
  if (gammas.empty()) throw ConfigError("gamma sweep needs at least one value");
  std::vector<SweepRun> runs;
  for (double g : gammas) {
    TrainConfig c = base;
    c.gamma = g;
    Trainer t(c, data, make_backend());
    t.run([&](const UpdateMetrics& m) {
      if (on_update) on_update(g, m);
    });
    runs.push_back({g, t.history(), summarize_entropy(t.model(), data)});
  }
  return runs;
}

}  // namespace uprm::trainer
