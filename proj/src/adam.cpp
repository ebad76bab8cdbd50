// Copyright 2026 The adsb-sentinel Authors
// SPDX-License-Identifier: Apache-2.0
#include "sentinel/adam.hpp"

#include <cmath>

namespace sentinel {

void Adam::step(ParamStore& params) {
  auto& items = params.items();
  if (m_.empty()) {
    m_.resize(items.size());
    v_.resize(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      m_[i] = ag::Vec::Zero(items[i].second.size());
      v_[i] = ag::Vec::Zero(items[i].second.size());
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto& [name, p] = items[i];
    if (!p.requires_grad()) continue;
    if (!p.has_grad())
      throw ag::GradError("adam_step: parameter '" + name + "' has no gradient");
    const ag::Vec& g = p.grad();
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    ag::Vec mhat = m_[i] / bc1;
    ag::Vec vhat = v_[i] / bc2;
    ag::Vec denom = vhat.cwiseSqrt() + ag::Vec::Constant(g.size(), eps_);
    p.values() -= lr_ * mhat.cwiseQuotient(denom);
    p.zero_grad();
  }
}

}  // namespace sentinel
