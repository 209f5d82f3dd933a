#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "safe/tensor.hpp"

namespace safe {

/// Malformed or truncated PPM input; offset is the byte where parsing failed.
class PpmError : public std::runtime_error {
 public:
  PpmError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Binary P6, maxval 255 -> Tensor [3,H,W] in RGB planes, value / 255.
/// Header comments ('#' to end of line) are accepted.
Tensor decode_ppm(const std::string& bytes);
Tensor load_ppm(const std::filesystem::path& path);

/// Tensor [3,H,W] -> canonical P6 ("P6\n<W> <H>\n255\n" + RGB bytes),
/// values clamped to [0,1] and rounded to the nearest of 256 levels.
std::string encode_ppm(const Tensor& image);
void save_ppm(const Tensor& image, const std::filesystem::path& path);

}  // namespace safe
