#pragma once

#include <array>
#include <string>
#include <vector>

#include "aio/autodiff.hpp"
#include "aio/params.hpp"

namespace aio {

// Teacher-forcing targets for the label-synchronous modes: the reference
// labels followed by EOS, one target per predictor row 0..U.
std::vector<int> label_targets(const std::vector<int>& y);

// One decoding pass worth of scalar losses (offline or streaming).
struct PassLosses {
  Var hat, aed, ctc, twa;
};

// total = hat + aed + ctc + twa (both passes) + lambda * lm. The language
// model term is skipped entirely when lambda is zero, so an infeasible or
// infinite LM loss cannot poison a lambda = 0 run.
struct JointLoss {
  Var total;
  std::array<double, 9> parts;  // per kPartNames
  bool finite = false;
  std::string infinite_name;  // first non-finite component, empty when finite
};

constexpr std::array<const char*, 9> kPartNames = {
    "hat_off", "aed_off", "ctc_off", "twa_off", "hat_str",
    "aed_str", "ctc_str", "twa_str", "lm"};

JointLoss combined_loss(const PassLosses& offline, const PassLosses& streaming,
                        const Var& lm, double lambda);

}  // namespace aio
