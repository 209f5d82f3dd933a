#include "safe/optimizer.hpp"

#include <fnmatch.h>

#include <cmath>
#include <stdexcept>

namespace safe {

LearningRates::LearningRates(std::initializer_list<std::pair<std::string, double>> entries) {
  for (const auto& [pattern, lr] : entries) set(pattern, lr);
}

void LearningRates::set(std::string pattern, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("learning rate for '" + pattern + "' must be positive and finite");
  }
  for (auto& entry : entries_) {
    if (entry.first == pattern) {
      entry.second = lr;
      return;
    }
  }
  entries_.emplace_back(std::move(pattern), lr);
}

std::optional<double> LearningRates::lookup(std::string_view group) const {
  const std::string name(group);
  for (const auto& [pattern, lr] : entries_)
    if (fnmatch(pattern.c_str(), name.c_str(), 0) == 0) return lr;
  return std::nullopt;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, const LearningRates& rates) {
  std::vector<double> lrs(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->trainable) continue;
    const auto lr = rates.lookup(params[i]->group);
    if (!lr) throw std::invalid_argument("no learning rate for parameter '" + params[i]->name + "'");
    lrs[i] = *lr;
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    auto& slot = state.slots[p.name];
    const std::size_t n = p.tensor.numel();
    if (slot.m.size() != n) {
      slot.m.assign(n, 0.0f);
      slot.v.assign(n, 0.0f);
      slot.t = 0;
    }
    slot.t += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(slot.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(slot.t));
    const auto grad = p.tensor.grad();
    auto theta = p.tensor.mutable_data();
    for (std::size_t j = 0; j < n; ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      const double m = state.beta1 * slot.m[j] + (1.0 - state.beta1) * g;
      const double v = state.beta2 * slot.v[j] + (1.0 - state.beta2) * g * g;
      slot.m[j] = static_cast<float>(m);
      slot.v[j] = static_cast<float>(v);
      const double m_hat = m / c1;
      const double v_hat = v / c2;
      theta[j] = static_cast<float>(theta[j] - lrs[i] * m_hat / (std::sqrt(v_hat) + state.epsilon));
    }
    p.tensor.clear_grad();
  }
}

}  // namespace safe
