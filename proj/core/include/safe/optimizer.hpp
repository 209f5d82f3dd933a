#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "safe/network.hpp"

namespace safe {

/// Ordered (glob pattern -> learning rate) table matched against parameter
/// group names; the first matching pattern wins. Patterns use fnmatch
/// syntax, e.g. "sfe_encoder.*".
class LearningRates {
 public:
  LearningRates() = default;
  LearningRates(std::initializer_list<std::pair<std::string, double>> entries);

  void set(std::string pattern, double lr);
  std::optional<double> lookup(std::string_view group) const;
  const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, double>> entries_;
};

struct AdamSlot {
  std::vector<float> m;
  std::vector<float> v;
  std::uint64_t t = 0;
};

/// Adam moments keyed by parameter name. Slots of frozen parameters are kept
/// but not advanced.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::map<std::string, AdamSlot> slots;
};

/// One bias-corrected Adam update of every trainable parameter, using the
/// learning rate of its group; gradients are cleared afterwards. A trainable
/// parameter whose group has no rate is an error (checked before any update).
/// Parameters without a gradient buffer are treated as having zero gradient.
void adam_step(std::span<Parameter* const> params, AdamState& state, const LearningRates& rates);

}  // namespace safe
