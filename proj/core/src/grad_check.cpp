#include "aio/grad_check.hpp"

#include <cmath>
#include <limits>

namespace aio {

GradCheckReport grad_check(const std::vector<Var>& params,
                           const std::function<Var()>& build_loss,
                           double eps) {
  GradCheckReport report;

  zero_grad(params);
  Var root = build_loss();
  if (!std::isfinite(root.scalar())) {
    report.max_rel_error = std::numeric_limits<double>::infinity();
    report.worst = "non-finite loss";
    return report;
  }
  backward(root);

  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Var& p : params) analytic.push_back(p.node()->ensure_grad());

  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& value = params[pi].node()->value;
    for (int64_t i = 0; i < value.numel(); ++i) {
      double saved = value[i];
      value[i] = saved + eps;
      double up = build_loss().scalar();
      value[i] = saved - eps;
      double down = build_loss().scalar();
      value[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.max_rel_error = std::numeric_limits<double>::infinity();
        report.worst = "non-finite loss under perturbation";
        return report;
      }
      double fd = (up - down) / (2.0 * eps);
      double a = analytic[pi][i];
      double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = "param " + std::to_string(pi) + "[" +
                       std::to_string(i) + "] analytic " + std::to_string(a) +
                       " central " + std::to_string(fd);
      }
    }
  }
  return report;
}

}  // namespace aio
