#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "uprm/core/random.hpp"
#include "uprm/diffnum/checkpoint.hpp"
#include "uprm/diffnum/grad_check.hpp"
#include "uprm/diffnum/optimizer.hpp"
#include "uprm/diffnum/tensor.hpp"
#include "uprm/errors.hpp"

using namespace uprm;
using namespace uprm::diffnum;

namespace {

Tensor random_tensor(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return Tensor::from_values(r, c, v, true);
}

void check_grad(const std::function<Tensor()>& fn, const ParameterList& params, double tol = 1e-6) {
  const auto report = grad_check(fn, params, tol);
  INFO("worst " << report.worst_parameter << "[" << report.worst_index << "] rel " << report.max_rel_error);
  CHECK(report.passed);
  CHECK(report.num_checked > 0);
}

}  // namespace

TEST_CASE("relu gradient") {
  auto x = Tensor::row({-1.0, 2.0}, true);
  sum(relu(x)).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("softmax and layer norm values") {
  const auto s = softmax_rows(Tensor::row({0.0, 0.0}));
  CHECK(s.values()[0] == doctest::Approx(0.5));
  CHECK(s.values()[1] == doctest::Approx(0.5));

  const auto ln = layer_norm_rows(Tensor::row({1.0, 2.0, 3.0}));
  const double sd = std::sqrt(2.0 / 3.0);
  CHECK(ln.values()[0] == doctest::Approx(-1.0 / sd).epsilon(1e-6));
  CHECK(ln.values()[1] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(ln.values()[2] == doctest::Approx(1.0 / sd).epsilon(1e-6));

  const auto lsm = log_softmax_rows(Tensor::row({1000.0, 0.0}));
  CHECK(std::isfinite(lsm.values()[1]));
  CHECK(lsm.values()[1] == doctest::Approx(-1000.0));
}

TEST_CASE("squared norm gradient and constant function") {
  auto w = Tensor::row({1.0, 2.0}, true);
  sum(w * w).backward();
  CHECK(w.grad()[0] == doctest::Approx(2.0));
  CHECK(w.grad()[1] == doctest::Approx(4.0));

  auto v = Tensor::row({3.0, -1.0}, true);
  auto c = add_scalar(scale(v, 0.0), 5.0);
  sum(c).backward();
  for (double g : v.grad()) CHECK(g == 0.0);
}

TEST_CASE("grad check of every primitive") {
  Rng rng(17);
  auto a = random_tensor(rng, 3, 4);
  auto b = random_tensor(rng, 4, 2);
  auto c = random_tensor(rng, 3, 4);
  auto r = random_tensor(rng, 1, 4);
  auto pos = random_tensor(rng, 3, 4, 0.5, 2.0);
  ParameterList p{{"a", a}, {"b", b}, {"c", c}, {"r", r}, {"pos", pos}};
  const auto weights = Tensor::from_values(3, 4, {0.3, -0.2, 0.5, 0.1, -0.7, 0.4, 0.2, -0.1, 0.6, 0.9, -0.3, 0.8});

  check_grad([&] { return sum(matmul(a, b) * matmul(a, b)); }, {p[0], p[1]});
  check_grad([&] { return sum(mul(transpose(a), transpose(c))); }, {p[0], p[2]});
  check_grad([&] { return sum(mul(add(a, r), c)); }, {p[0], p[2], p[3]});
  check_grad([&] { return sum(mul(sub(a, c), sub(a, r))); }, {p[0], p[2], p[3]});
  check_grad([&] { return sum(mul(a, r) * a); }, {p[0], p[3]});
  check_grad([&] { return sum(scale(add_scalar(a, 0.3), -1.7) * c); }, {p[0], p[2]});
  check_grad([&] { return sum(mul(gelu(a), weights)); }, {p[0]});
  check_grad([&] { return sum(mul(tanh(a), weights)); }, {p[0]});
  check_grad([&] { return sum(mul(sigmoid(a), weights)); }, {p[0]});
  check_grad([&] { return sum(mul(exp(a), weights)); }, {p[0]});
  check_grad([&] { return sum(mul(log(pos), weights)); }, {p[4]});
  check_grad([&] { return sum(mul(softmax_rows(a), weights)); }, {p[0]});
  check_grad([&] { return sum(mul(log_softmax_rows(a), weights)); }, {p[0]});
  check_grad([&] { return sum(mul(layer_norm_rows(a, 1e-5), weights)); }, {p[0]}, 1e-5);
  check_grad([&] { return sum(matmul(concat_cols(a, c), transpose(concat_cols(c, a)))); }, {p[0], p[2]});
  check_grad(
      [&] {
        const Tensor parts[] = {a, r, c};
        return sum(concat_rows(parts) * concat_rows(parts));
      },
      {p[0], p[2], p[3]});
  check_grad([&] { return sum(slice_rows(a, 1, 3) * slice_rows(c, 0, 2).detach()) + sum(slice_cols(a, 1, 2)); },
             {p[0]});
  check_grad([&] { return element(a, 2, 1) * element(c, 0, 3) + mean(a * c); }, {p[0], p[2]});
  // relu away from its kink
  auto shifted = random_tensor(rng, 2, 3, 0.2, 1.0);
  check_grad([&] { return sum(relu(shifted) + relu(scale(shifted, -1.0))); }, {{"s", shifted}});
}

TEST_CASE("tape visits a shared node once") {
  auto x = Tensor::scalar(3.0, true);
  auto y = tanh(x);
  auto z = y * y + y;  // diamond through y
  ComputationTape tape(z);
  const auto ops = tape.ops();
  CHECK(std::count(ops.begin(), ops.end(), std::string("tanh")) == 1);
  tape.backward();
  const double t = std::tanh(3.0);
  CHECK(x.grad()[0] == doctest::Approx((2 * t + 1) * (1 - t * t)).epsilon(1e-12));
}

TEST_CASE("leaf gradients accumulate until zeroed") {
  auto x = Tensor::row({1.0, 2.0}, true);
  sum(x).backward();
  sum(x).backward();
  CHECK(x.grad()[0] == 2.0);
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("shape mismatch and domain errors") {
  const auto a = Tensor::zeros(2, 3);
  const auto b = Tensor::zeros(2, 2);
  CHECK_THROWS_AS(add(a, b), NumericError);
  CHECK_THROWS_AS(matmul(a, a), NumericError);
  CHECK_THROWS_AS(log(Tensor::row({0.0})), NumericError);
  CHECK_THROWS_AS(exp(Tensor::row({1e6})), NumericError);
}

TEST_CASE("dropout is the identity in eval mode and unbiased in train mode") {
  Rng rng(1);
  const auto x = Tensor::full(1, 10000, 1.0);
  const auto eval = dropout(x, 0.1, rng, false);
  for (double v : eval.values()) REQUIRE(v == 1.0);
  const auto train = dropout(x, 0.1, rng, true);
  double total = 0.0;
  int zeros = 0;
  for (double v : train.values()) {
    total += v;
    zeros += v == 0.0;
  }
  CHECK(total / 10000.0 == doctest::Approx(1.0).epsilon(0.01));
  CHECK(zeros > 800);
  CHECK(zeros < 1200);

  Rng r1(9), r2(9);
  const auto m1 = dropout(x, 0.5, r1, true);
  const auto m2 = dropout(x, 0.5, r2, true);
  CHECK(std::equal(m1.values().begin(), m1.values().end(), m2.values().begin()));
}

TEST_CASE("AdamW descends, decays, and converges") {
  SUBCASE("first step moves against the gradient by about lr") {
    auto w = Tensor::row({1.0, -1.0}, true);
    AdamW opt({{"w", w}}, {.learning_rate = 0.01});
    sum(w).backward();
    opt.step();
    CHECK(w.values()[0] == doctest::Approx(0.99).epsilon(1e-6));
    CHECK(w.values()[1] == doctest::Approx(-1.01).epsilon(1e-6));
  }
  SUBCASE("decay is decoupled from the gradient") {
    auto w = Tensor::row({2.0}, true);
    AdamW opt({{"w", w}}, {.learning_rate = 0.1, .weight_decay = 0.5});
    w.mutable_grad()[0] = 0.0;
    opt.step();
    CHECK(w.values()[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0).epsilon(1e-12));
  }
  SUBCASE("convex quadratic") {
    auto w = Tensor::row({3.0, -2.0, 0.5}, true);
    const auto target = Tensor::row({1.0, 1.0, -1.0});
    AdamW opt({{"w", w}}, {.learning_rate = 0.1});
    for (int i = 0; i < 200; ++i) {
      opt.zero_grad();
      const auto d = w - target;
      sum(d * d).backward();
      opt.step();
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(w.values()[i] == doctest::Approx(target.values()[i]).epsilon(0.02));
  }
  SUBCASE("non-finite gradient skips the update") {
    auto w = Tensor::row({1.0}, true);
    AdamW opt({{"w", w}}, {});
    w.mutable_grad()[0] = std::nan("");
    const auto outcome = opt.step();
    CHECK_FALSE(outcome.applied);
    CHECK(w.values()[0] == 1.0);
    CHECK(opt.state().step == 0);
  }
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto dir = std::filesystem::temp_directory_path() / "uprm_test_ckpt";
  std::filesystem::remove_all(dir);
  Rng rng(4);
  auto w = random_tensor(rng, 3, 2);
  auto b = random_tensor(rng, 1, 2);
  ParameterList params{{"w", w}, {"b", b}};
  AdamW opt(params, {});
  sum(add(matmul(w, transpose(Tensor::row({1.0, 2.0}))), Tensor::zeros(3, 1)) * element(b, 0, 1)).backward();
  opt.step();

  Checkpoint ck;
  ck.header = {42, 7, "abc"};
  ck.parameters = parameters_to_json(params);
  ck.state = {{"optimizer", opt.state_to_json()}};
  write_checkpoint(dir / "ck.json", ck);

  auto w2 = Tensor::zeros(3, 2, true);
  auto b2 = Tensor::zeros(1, 2, true);
  ParameterList params2{{"w", w2}, {"b", b2}};
  const auto back = read_checkpoint(dir / "ck.json");
  CHECK(back.header.seed == 42);
  CHECK(back.header.step == 7);
  CHECK(back.header.config_hash == "abc");
  load_parameters(back.parameters, params2);
  CHECK(std::equal(w.values().begin(), w.values().end(), w2.values().begin()));
  CHECK(std::equal(b.values().begin(), b.values().end(), b2.values().begin()));
  AdamW opt2(params2, {});
  opt2.load_state(back.state.at("optimizer"));
  CHECK(opt2.state().first_moment == opt.state().first_moment);
  CHECK(opt2.state().second_moment == opt.state().second_moment);

  ParameterList wrong{{"w", Tensor::zeros(2, 2, true)}};
  CHECK_THROWS_AS(load_parameters(back.parameters, wrong), DataError);
  ParameterList missing{{"q", Tensor::zeros(1, 1, true)}};
  CHECK_THROWS_AS(load_parameters(back.parameters, missing), DataError);

  {
    std::ofstream out(dir / "bad.json");
    out << "{\"format\": \"uprm-checkpoint/1\", \"header\": {";
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "bad.json"), DataError);
  CHECK_THROWS_AS(read_checkpoint(dir / "absent.json"), DataError);
  std::filesystem::remove_all(dir);
}
