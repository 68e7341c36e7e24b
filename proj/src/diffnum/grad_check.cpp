#include "uprm/diffnum/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "uprm/errors.hpp"

namespace uprm::diffnum {

namespace {

double evaluate(const std::function<Tensor()>& fn, const std::string& where) {
  const Tensor out = fn();
  if (out.size() != 1) throw DomainError("grad_check needs a scalar function, got " + out.shape().str());
  const double v = out.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value at " + where);
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& fn, const ParameterList& params,
                           double tolerance, double step) {
  zero_grad(params);
  {
    const Tensor out = fn();
    if (!std::isfinite(out.item())) throw NumericError("grad_check: non-finite function value at probe point");
    out.backward();
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    auto g = p.tensor.grad();
    std::vector<double> copy(p.tensor.size(), 0.0);
    std::copy(g.begin(), g.end(), copy.begin());
    analytic.push_back(std::move(copy));
  }
  zero_grad(params);

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor t = params[k].tensor;
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const std::string where = params[k].name + "[" + std::to_string(i) + "]";
      const double original = values[i];
      values[i] = original + step;
      const double up = evaluate(fn, where);
      values[i] = original - step;
      const double down = evaluate(fn, where);
      values[i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-6});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel_err > report.max_rel_error || report.num_checked == 0) {
        report.max_rel_error = std::max(report.max_rel_error, rel_err);
        report.worst_parameter = params[k].name;
        report.worst_index = i;
      }
      ++report.num_checked;
    }
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace uprm::diffnum
