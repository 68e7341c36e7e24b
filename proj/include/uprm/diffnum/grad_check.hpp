#pragma once

#include <functional>
#include <string>

#include "uprm/diffnum/tensor.hpp"

namespace uprm::diffnum {

struct GradCheckReport {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t num_checked = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  bool passed = false;
};

/// Compares backward() gradients of a scalar function against central finite
/// differences. Relative error is |a - n| / max(|a|, |n|, 1e-6).
///
/// `fn` must rebuild its graph on every call (it is evaluated 2x per
/// coordinate with perturbed parameter values). Parameter gradients are
/// zeroed before and after. Throws NumericError, naming the parameter and
/// coordinate, when the function value is not finite.
GradCheckReport grad_check(const std::function<Tensor()>& fn, const ParameterList& params,
                           double tolerance, double step = 1e-5);

}  // namespace uprm::diffnum
