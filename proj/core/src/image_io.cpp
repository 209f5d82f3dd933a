#include "safe/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace safe {

namespace {

class HeaderParser {
 public:
  explicit HeaderParser(const std::string& bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = static_cast<unsigned char>(bytes_[pos_]);
      if (std::isspace(c)) {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    last_start_ = start;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > 1'000'000) throw PpmError(std::string("PPM ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw PpmError(std::string("PPM header: expected ") + what, start);
    return value;
  }

  std::size_t& cursor() { return pos_; }
  std::size_t last_start() const { return last_start_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
  std::size_t last_start_ = 0;
};

}  // namespace

Tensor decode_ppm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw PpmError("not a binary PPM (expected P6)", 0);
  HeaderParser parser(bytes);
  parser.cursor() = 2;
  const std::size_t width = parser.number("width");
  const std::size_t width_at = parser.last_start();
  const std::size_t height = parser.number("height");
  const std::size_t maxval = parser.number("maxval");
  const std::size_t maxval_at = parser.last_start();
  if (maxval != 255) throw PpmError("unsupported PPM maxval " + std::to_string(maxval) + " (need 255)", maxval_at);
  if (width == 0 || height == 0) throw PpmError("PPM has zero size", width_at);
  std::size_t& pos = parser.cursor();
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw PpmError("PPM header must end with one whitespace byte", pos);
  }
  ++pos;
  const std::size_t plane = width * height;
  if (bytes.size() - pos < 3 * plane) {
    throw PpmError("PPM payload truncated: need " + std::to_string(3 * plane) + " bytes, have " +
                       std::to_string(bytes.size() - pos),
                   bytes.size());
  }
  std::vector<float> data(3 * plane);
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      data[c * plane + i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + 3 * i + c])) / 255.0f;
  return Tensor({3, height, width}, std::move(data));
}

Tensor load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const PpmError& e) {
    throw PpmError(path.string() + ": " + std::string(e.what()).substr(0, std::string(e.what()).rfind(" (byte")),
                   e.offset());
  }
}

std::string encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw std::invalid_argument("save_ppm expects [3,H,W], got " + shape_string(image.shape()));
  }
  const std::size_t height = image.dim(1), width = image.dim(2), plane = height * width;
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + 3 * plane);
  const auto d = image.data();
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(d[c * plane + i], 0.0f, 1.0f);
      out[header + 3 * i + c] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
    }
  return out;
}

void save_ppm(const Tensor& image, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace safe
