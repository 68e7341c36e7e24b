#include <doctest.h>

#include <cmath>
#include <vector>

#include "uprm/core/first_error.hpp"
#include "uprm/diffnum/grad_check.hpp"
#include "uprm/errors.hpp"
#include "uprm/prm/featurizer.hpp"
#include "uprm/prm/model.hpp"

using namespace uprm;
using namespace uprm::prm;

namespace {

Trajectory traj(std::vector<std::string> steps, std::optional<int> gold = std::nullopt) {
  return Trajectory{"t", "Compute 3 + 4 * 2.", std::move(steps), gold, std::nullopt};
}

PrmConfig tiny_config(std::uint64_t seed = 1) {
  PrmConfig c;
  c.features.dim = 16;
  c.hidden = 4;
  c.head_hidden = 3;
  c.seed = seed;
  return c;
}

void randomize_head(const PrmModel& m, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& p : m.parameters()) {
    if (p.name == "prm.head2" || p.name == "prm.head2_bias") {
      diffnum::Tensor t = p.tensor;
      for (auto& v : t.mutable_values()) v = 0.5 * rng.normal();
    }
  }
}

void set_head_bias(const PrmModel& m, double correct_logit) {
  for (const auto& p : m.parameters()) {
    if (p.name == "prm.head2_bias") {
      diffnum::Tensor t = p.tensor;
      t.mutable_values()[0] = correct_logit;
      t.mutable_values()[1] = 0.0;
    }
  }
}

}  // namespace

TEST_CASE("featurizer is normalized, deterministic, and whitespace-insensitive") {
  Featurizer f;
  const auto a = f.features("  4 * 2 =  8 ");
  const auto b = f.features("4 * 2 = 8");
  CHECK(a == b);
  double n2 = 0.0;
  for (double x : a) n2 += x * x;
  CHECK(n2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.features("") == std::vector<double>(1024, 0.0));
  CHECK(f.features("4 * 2 = 8") != f.features("4 * 2 = 9"));
  CHECK_THROWS_AS(Featurizer(FeaturizerConfig{0, 2, 4}), ConfigError);
}

TEST_CASE("untrained model is symmetric") {
  PrmModel model;
  const auto out = model.forward(traj({"3 + 8 = 11", "so the answer is 11"}));
  REQUIRE(out.step_probs.size() == 2);
  CHECK(out.step_probs[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.distribution.prob(1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.distribution.prob(2) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(out.distribution.prob(3) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(supervised_loss(model, traj({"a b", "c d"}), 3).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("forced step probabilities reproduce the core distribution") {
  PrmModel model(tiny_config());
  // The head's log-odds pass through L * tanh(d / L); invert that.
  const double bound = std::log((1.0 - kProbEpsilon) / kProbEpsilon);
  set_head_bias(model, bound * std::atanh(std::log(9.0) / bound));
  const auto out = model.forward(traj({"x", "y"}));
  CHECK(out.step_probs[0] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(out.distribution.prob(1) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(out.distribution.prob(2) == doctest::Approx(0.09).epsilon(1e-12));
  CHECK(out.distribution.prob(3) == doctest::Approx(0.81).epsilon(1e-12));
  CHECK(out.entropy == doctest::Approx(distribution_entropy(std::vector<double>{0.1, 0.09, 0.81})).epsilon(1e-12));
  CHECK(predict_first_error(out).value() == 3);
}

TEST_CASE("saturated heads stay inside the probability clamp") {
  PrmModel model(tiny_config());
  for (double logit : {40.0, -40.0, 1e6, -1e6}) {
    set_head_bias(model, logit);
    const auto out = model.forward(traj({"x", "y", "z"}));
    for (double p : out.step_probs) {
      CHECK(p >= kProbEpsilon - 1e-12);
      CHECK(p <= 1.0 - kProbEpsilon + 1e-12);
    }
    double total = 0.0;
    for (int j = 1; j <= 4; ++j) total += out.distribution.prob(j);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("property: encoder and head are causal") {
  PrmModel model(tiny_config(3));
  randomize_head(model, 4);
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int T = 2 + static_cast<int>(rng.below(5));
    std::vector<std::string> steps;
    for (int s = 0; s < T; ++s) steps.push_back("step " + std::to_string(rng.below(1000)));
    const auto base = traj(steps);
    const int t = 1 + static_cast<int>(rng.below(T - 1));  // keep steps <= t, edit later ones
    auto edited = steps;
    for (int s = t; s < T; ++s) edited[s] = "changed " + std::to_string(rng.below(1000));
    const auto z1 = model.hidden_states(base);
    const auto z2 = model.hidden_states(traj(edited));
    const auto o1 = model.forward(base);
    const auto o2 = model.forward(traj(edited));
    for (int s = 0; s < t; ++s) {
      REQUIRE(z1[s] == z2[s]);
      REQUIRE(o1.step_probs[s] == o2.step_probs[s]);
    }
  }
  // Swapping steps 2 and 3 leaves z_1 alone.
  const auto a = model.hidden_states(traj({"one", "two", "three"}));
  const auto b = model.hidden_states(traj({"one", "three", "two"}));
  CHECK(a[0] == b[0]);
  CHECK(a[1] != b[1]);
}

TEST_CASE("head probabilities are complementary") {
  PrmModel model(tiny_config(2));
  randomize_head(model, 9);
  const auto g = model.forward_graph(traj({"a", "b", "c"}));
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(std::exp(g.step_log_probs.at(t, 0)) + std::exp(g.step_log_probs.at(t, 1)) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("sampling matches the distribution") {
  Rng rng(123);
  const auto dist = FirstErrorDistribution::from_step_probs({0.9, 0.9});
  const int draws = 100000;
  std::vector<int> counts(3, 0);
  for (int i = 0; i < draws; ++i) ++counts[sample_position(dist, rng).value() - 1];
  const double expected[] = {0.1, 0.09, 0.81};
  for (int j = 0; j < 3; ++j) {
    const double sigma = std::sqrt(draws * expected[j] * (1 - expected[j]));
    CHECK(std::abs(counts[j] - draws * expected[j]) < 3 * sigma);
  }

  // Uniform over 4: r = (3/4, 2/3, 1/2).
  const auto uniform = FirstErrorDistribution::from_step_probs({0.75, 2.0 / 3.0, 0.5});
  std::vector<int> u(4, 0);
  for (int i = 0; i < draws; ++i) ++u[sample_position(uniform, rng).value() - 1];
  double chi2 = 0.0;
  for (int c : u) chi2 += (c - draws / 4.0) * (c - draws / 4.0) / (draws / 4.0);
  CHECK(chi2 < 11.345);  // chi-square, 3 dof, alpha = 0.01

  const auto point = FirstErrorDistribution::from_step_probs({1.0 - 1e-300, 0.0 + 1e-300});
  for (int i = 0; i < 100; ++i) CHECK(sample_position(point, rng).value() == 2);

  Rng r1(7), r2(7);
  PrmModel model(tiny_config());
  for (int i = 0; i < 20; ++i) CHECK(sample_position(model, traj({"a", "b"}), r1) == sample_position(model, traj({"a", "b"}), r2));
}

TEST_CASE("prediction rules") {
  PrmOutput out{{0.9, 0.4, 0.9}, FirstErrorDistribution::from_step_probs({0.9, 0.4, 0.9}), 0.0};
  CHECK(predict_first_error(out, {PredictionRule::kThreshold, 0.5}).value() == 2);
  CHECK(predict_first_error(out, {PredictionRule::kThreshold, 0.3}).value() == 4);
  CHECK_THROWS_AS(predict_first_error(out, {PredictionRule::kThreshold, 1.0}), ConfigError);
  PrmOutput tie{{0.5}, FirstErrorDistribution::from_step_probs({0.5}), 0.0};
  CHECK(predict_first_error(tie).value() == 1);
}

TEST_CASE("supervised loss and log_prob_grad match finite differences") {
  PrmModel model(tiny_config(11));
  randomize_head(model, 12);
  const auto params = model.parameters();
  std::size_t count = 0;
  for (const auto& p : params) count += p.tensor.size();
  REQUIRE(count <= 1000);

  const auto t2 = traj({"3 + 8 = 11", "11 * 2 = 23"}, 2);
  const auto report = diffnum::grad_check([&] { return supervised_loss(model, t2); }, params, 1e-4);
  INFO("worst " << report.worst_parameter << " rel " << report.max_rel_error);
  CHECK(report.passed);

  const auto t3 = traj({"a = 1", "b = 2", "c = 4"});
  for (int j = 1; j <= 4; ++j) {
    const auto grads = log_prob_grad(model, t3, j);
    const auto r = diffnum::grad_check(
        [&] { return diffnum::element(model.forward_graph(t3).log_p, static_cast<std::size_t>(j - 1), 0); }, params,
        1e-4);
    CHECK(r.passed);
    // Same numbers as a direct backward pass.
    diffnum::zero_grad(params);
    diffnum::element(model.forward_graph(t3).log_p, static_cast<std::size_t>(j - 1), 0).backward();
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto g = params[k].tensor.grad();
      for (std::size_t i = 0; i < g.size(); ++i) REQUIRE(grads[k][i] == g[i]);
    }
    diffnum::zero_grad(params);
  }
  CHECK_THROWS_AS(supervised_loss(model, traj({"a"})), DataError);
}

TEST_CASE("property: expected score function is zero") {
  PrmModel model(tiny_config(21));
  randomize_head(model, 22);
  Rng rng(3);
  for (int T = 1; T <= 5; ++T) {
    std::vector<std::string> steps;
    for (int s = 0; s < T; ++s) steps.push_back("s" + std::to_string(rng.below(100)));
    const auto t = traj(steps);
    const auto out = model.forward(t);
    std::vector<std::vector<double>> total;
    for (int j = 1; j <= T + 1; ++j) {
      const auto g = log_prob_grad(model, t, j);
      if (total.empty()) {
        total = g;
        for (auto& v : total) for (auto& x : v) x = 0.0;
      }
      for (std::size_t k = 0; k < g.size(); ++k) {
        for (std::size_t i = 0; i < g[k].size(); ++i) total[k][i] += out.distribution.prob(j) * g[k][i];
      }
    }
    for (const auto& v : total) for (double x : v) REQUIRE(std::abs(x) < 1e-8);
  }
}

TEST_CASE("log p(j = 1) ignores features that only later steps carry") {
  PrmModel model(tiny_config(31));
  randomize_head(model, 32);
  const auto t = traj({"alpha", "completely different words here", "zzz yyy"});
  const auto grads = log_prob_grad(model, t, 1);
  const auto& f = model.featurizer();
  const auto x0 = f.features(t.problem);
  const auto x1 = f.features(t.steps[0]);
  const auto params = model.parameters();
  const std::size_t H = model.config().hidden;
  int checked = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].name != "prm.step_proj" && params[k].name != "prm.problem_proj") continue;
    for (std::size_t i = 0; i < f.config().dim; ++i) {
      if (x0[i] != 0.0 || x1[i] != 0.0) continue;
      for (std::size_t h = 0; h < H; ++h) REQUIRE(grads[k][i * H + h] == 0.0);
      ++checked;
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("clone is independent") {
  PrmModel a(tiny_config());
  PrmModel b = a.clone();
  set_head_bias(b, 2.0);
  CHECK(a.forward(traj({"x"})).step_probs[0] == doctest::Approx(0.5));
  CHECK(b.forward(traj({"x"})).step_probs[0] != doctest::Approx(0.5));
}
