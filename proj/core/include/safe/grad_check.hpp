#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "safe/tensor.hpp"

namespace safe {

struct GradCheckReport {
  std::string name;
  std::size_t points = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

using DifferentiableOp = std::function<Tensor64(std::span<const Tensor64>)>;

/// Compares reverse-mode gradients of `op` at `inputs` with central finite
/// differences (step `step`). The output is reduced to a scalar by a fixed
/// random projection, so every output element contributes. The error per
/// element is |analytic - numeric| / max(|analytic|, |numeric|, 1e-3); the
/// floor keeps near-zero gradients from dominating through rounding noise.
GradCheckReport grad_check(const std::string& name, const DifferentiableOp& op,
                           std::vector<Tensor64> inputs, double tolerance, double step = 1e-5);

/// Runs grad_check at `points` random points per op for the whole op set
/// (conv2d, conv_transpose2d, maxpool2d, prelu, relu, mse_loss,
/// power_normalize). Points are drawn away from kinks.
std::vector<GradCheckReport> run_oracle_suite(std::size_t points = 20, std::uint64_t seed = 2024,
                                              double tolerance = 1e-4);

}  // namespace safe
