#pragma once

#include <functional>
#include <string>
#include <vector>

#include "aio/autodiff.hpp"

namespace aio {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // which parameter scalar was worst, for diagnostics
};

// Compares the tape's analytic gradient against central differences for every
// scalar in params. build_loss must assemble a fresh graph over the current
// parameter values each time it is called. The error metric per scalar is
// |analytic - central| / max(1, |analytic|); the report keeps the max. A
// non-finite loss is reported as +inf.
GradCheckReport grad_check(const std::vector<Var>& params,
                           const std::function<Var()>& build_loss, double eps);

}  // namespace aio
