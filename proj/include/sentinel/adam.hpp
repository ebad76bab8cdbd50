// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "sentinel/params.hpp"
#include "sentinel/tensor.hpp"

namespace sentinel {

// Adam with bias correction. Moments are zero-initialized; the step counter
// increases by exactly one per update.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  // One update over all parameters; gradients are zeroed afterward.
  // A requires_grad parameter that never received a gradient is an error.
  void step(ParamStore& params);

  std::int64_t step_count() const { return t_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<ag::Vec> m_, v_;
};

}  // namespace sentinel
