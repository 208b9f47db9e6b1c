// Copyright (c) 2026, The cmae Authors
// SPDX-License-Identifier: Apache-2.0

#include "cmae/optim.hpp"

#include <cmath>
#include <string>

#include "cmae/errors.hpp"

namespace cmae {

template <typename T>
Adam<T>::Adam(ParamList<T> params, const AdamConfig& config) : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    if (!p.tensor.is_leaf() || !p.tensor.requires_grad()) {
      throw ConfigError("optimizer: '" + p.name + "' is not a trainable leaf");
    }
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    const auto g = p.tensor.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(static_cast<double>(g[i]))) {
        throw NumericError("non-finite gradient in '" + p.name + "' at element " + std::to_string(i) + " (step " +
                           std::to_string(steps_ + 1) + ")");
      }
    }
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.tensor.has_grad()) continue;
    const auto g = p.tensor.grad();
    auto w = p.tensor.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    const double wd = p.decay ? config_.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      double wi = w[i];
      double gi = g[i];
      if (config_.decoupled) {
        wi *= 1.0 - lr * wd;
      } else {
        gi += wd * wi;
      }
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      wi -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
      w[i] = static_cast<T>(wi);
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace cmae
