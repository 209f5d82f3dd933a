#include "safe/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace safe {

double psnr(std::span<const float> reference, std::span<const float> test) {
  if (reference.size() != test.size() || reference.empty()) {
    throw std::invalid_argument("psnr size mismatch: " + std::to_string(reference.size()) + " vs " +
                                std::to_string(test.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = static_cast<double>(reference[i]) - static_cast<double>(test[i]);
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(reference.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double psnr(const Tensor& reference, const Tensor& test) {
  if (reference.shape() != test.shape()) {
    throw std::invalid_argument("psnr shape mismatch: " + shape_string(reference.shape()) + " vs " +
                                shape_string(test.shape()));
  }
  return psnr(reference.data(), test.data());
}

}  // namespace safe
