// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "cmae/nn.hpp"

namespace cmae {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
  /// true: AdamW (decay applied to the parameters). false: classic Adam
  /// with L2 decay folded into the gradient.
  bool decoupled = true;
};

/// Adam/AdamW over a parameter list. Parameters whose `decay` flag is off
/// are never decayed. Moments are kept in double.
template <typename T>
class Adam {
 public:
  Adam(ParamList<T> params, const AdamConfig& config);

  /// Applies one update from the accumulated grads. Throws NumericError
  /// naming the parameter if any gradient entry is not finite; no parameter
  /// is modified in that case.
  void step(double lr);
  void zero_grad();

  std::size_t steps() const { return steps_; }
  const ParamList<T>& params() const { return params_; }

 private:
  ParamList<T> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t steps_ = 0;
};

}  // namespace cmae
