#include "aio/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace aio {

std::vector<int> label_targets(const std::vector<int>& y) {
  std::vector<int> t = y;
  t.push_back(kEosId);
  return t;
}

JointLoss combined_loss(const PassLosses& offline, const PassLosses& streaming,
                        const Var& lm, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("combined_loss: lambda < 0");
  JointLoss out;
  std::array<const Var*, 9> vars = {
      &offline.hat,   &offline.aed,   &offline.ctc,  &offline.twa,
      &streaming.hat, &streaming.aed, &streaming.ctc, &streaming.twa, &lm};
  out.finite = true;
  for (size_t i = 0; i < vars.size(); ++i) {
    out.parts[i] = vars[i]->scalar();
    bool counted = i < 8 || lambda > 0.0;
    if (counted && !std::isfinite(out.parts[i]) && out.finite) {
      out.finite = false;
      out.infinite_name = kPartNames[i];
    }
  }
  std::vector<Var> xs;
  std::vector<double> ws;
  for (size_t i = 0; i < 8; ++i) {
    xs.push_back(*vars[i]);
    ws.push_back(1.0);
  }
  if (lambda > 0.0) {
    xs.push_back(lm);
    ws.push_back(lambda);
  }
  out.total = scalar_weighted_sum(xs, ws);
  return out;
}

}  // namespace aio
