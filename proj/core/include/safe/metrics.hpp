#pragma once

#include <span>

#include "safe/tensor.hpp"

namespace safe {

/// Peak-1.0 PSNR in dB: 10 log10(1 / mse). Identical inputs give +infinity,
/// the saturation sentinel.
double psnr(std::span<const float> reference, std::span<const float> test);
double psnr(const Tensor& reference, const Tensor& test);

}  // namespace safe
