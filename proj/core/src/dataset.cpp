#include "safe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "safe/image_io.hpp"
#include "safe/rng.hpp"

namespace safe {

void ImageDataset::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.rank() != 3 || s.dim(0) != 3 || s.dim(1) != height() || s.dim(2) != width()) {
      throw std::invalid_argument("sample " + std::to_string(i) + " has shape " + shape_string(s.shape()) +
                                  ", expected [3," + std::to_string(height()) + "," + std::to_string(width()) + "]");
    }
    for (float v : s.data())
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw std::invalid_argument("sample " + std::to_string(i) + " has a value outside [0,1]");
      }
  }
}

namespace {

using Color = std::array<double, 3>;

Color random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

double color_distance(const Color& a, const Color& b) {
  double d = 0.0;
  for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(a[c] - b[c]));
  return d;
}

// Linear ramp between two colors along a direction, evaluated at (x, y) in
// normalized image coordinates.
struct Gradient {
  Color from, to;
  double dx, dy;

  Color at(double x, double y) const {
    const double t = std::clamp(0.5 + (x - 0.5) * dx + (y - 0.5) * dy, 0.0, 1.0);
    Color c;
    for (int k = 0; k < 3; ++k) c[k] = from[k] + (to[k] - from[k]) * t;
    return c;
  }
};

Gradient random_gradient(Rng& rng, const Color& from) {
  const double angle = rng.uniform(0.0, 6.283185307179586);
  return {from, random_color(rng), std::cos(angle), std::sin(angle)};
}

enum class ShapeKind { Rectangle, Ellipse, GradientPatch };

struct Shape2D {
  ShapeKind kind;
  double cx, cy, rx, ry;  // normalized units
  Gradient fill;          // solid shapes use from == to
  double opacity;

  bool contains(double x, double y) const {
    if (kind == ShapeKind::Ellipse) {
      const double u = (x - cx) / rx, v = (y - cy) / ry;
      return u * u + v * v <= 1.0;
    }
    return std::abs(x - cx) <= rx && std::abs(y - cy) <= ry;
  }
};

constexpr int kSuper = 4;  // 4x4 supersampling for coverage

Tensor render(const SyntheticSpec& spec, Rng& rng) {
  const std::size_t h = spec.height, w = spec.width, plane = h * w;
  std::vector<double> img(3 * plane);

  const Color background = random_color(rng);
  const bool gradient_bg = rng.uniform() < 0.5;
  const Gradient bg = gradient_bg ? random_gradient(rng, background) : Gradient{background, background, 0.0, 0.0};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const auto c = bg.at((x + 0.5) / w, (y + 0.5) / h);
      for (int k = 0; k < 3; ++k) img[k * plane + y * w + x] = c[k];
    }

  const std::size_t shapes = 3 + rng.below(6);
  for (std::size_t s = 0; s < shapes; ++s) {
    Shape2D shape;
    shape.kind = static_cast<ShapeKind>(rng.below(3));
    shape.cx = rng.uniform(0.15, 0.85);
    shape.cy = rng.uniform(0.15, 0.85);
    shape.rx = rng.uniform(0.1, 0.3);
    shape.ry = rng.uniform(0.1, 0.3);
    Color color = random_color(rng);
    // The first shape is opaque and clearly distinct from the background,
    // so every image has at least two colors.
    if (s == 0) {
      while (color_distance(color, background) < 0.3) color = random_color(rng);
    }
    shape.fill = shape.kind == ShapeKind::GradientPatch ? random_gradient(rng, color)
                                                         : Gradient{color, color, 0.0, 0.0};
    shape.opacity = s == 0 ? 1.0 : rng.uniform(0.6, 1.0);

    const auto x0 = static_cast<std::size_t>(std::max(0.0, std::floor((shape.cx - shape.rx) * w)));
    const auto x1 = std::min(w, static_cast<std::size_t>(std::ceil((shape.cx + shape.rx) * w)) + 1);
    const auto y0 = static_cast<std::size_t>(std::max(0.0, std::floor((shape.cy - shape.ry) * h)));
    const auto y1 = std::min(h, static_cast<std::size_t>(std::ceil((shape.cy + shape.ry) * h)) + 1);
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) {
        int inside = 0;
        for (int sy = 0; sy < kSuper; ++sy)
          for (int sx = 0; sx < kSuper; ++sx) {
            const double px = (x + (sx + 0.5) / kSuper) / w;
            const double py = (y + (sy + 0.5) / kSuper) / h;
            inside += shape.contains(px, py) ? 1 : 0;
          }
        if (inside == 0) continue;
        const double alpha = shape.opacity * inside / (kSuper * kSuper);
        const auto c = shape.fill.at((x + 0.5) / w, (y + 0.5) / h);
        for (int k = 0; k < 3; ++k) {
          double& p = img[k * plane + y * w + x];
          p = p * (1.0 - alpha) + c[k] * alpha;
        }
      }
  }

  std::vector<float> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = static_cast<float>(std::clamp(img[i], 0.0, 1.0));
  return Tensor({3, h, w}, std::move(out));
}

}  // namespace

ImageDataset synth_dataset(const SyntheticSpec& spec) {
  if (spec.height == 0 || spec.width == 0 || spec.height % 8 != 0 || spec.width % 8 != 0) {
    throw std::invalid_argument("synthetic image size must be a positive multiple of 8, got " +
                                std::to_string(spec.height) + "x" + std::to_string(spec.width));
  }
  ImageDataset ds;
  ds.provenance = "synthetic count=" + std::to_string(spec.count) + " size=" + std::to_string(spec.height) + "x" +
                  std::to_string(spec.width) + " seed=" + std::to_string(spec.seed);
  ds.samples.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    Rng rng(Rng::derive(spec.seed, {i}));
    ds.samples.push_back(render(spec, rng));
  }
  return ds;
}

DatasetSplit split(const ImageDataset& dataset, std::array<double, 3> fractions, std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw std::invalid_argument("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order.begin(), order.end(), rng);

  const auto n = static_cast<double>(dataset.size());
  const auto n_train = static_cast<std::size_t>(std::floor(fractions[0] * n + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(fractions[1] * n + 1e-9));

  DatasetSplit out;
  for (auto* part : {&out.train, &out.val, &out.test}) part->provenance = dataset.provenance;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& part = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    part.samples.push_back(dataset.samples[order[i]]);
  }
  return out;
}

Tensor make_batch(const ImageDataset& dataset, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  const std::size_t h = dataset.height(), w = dataset.width(), stride = 3 * h * w;
  std::vector<float> data(indices.size() * stride);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = dataset.samples.at(indices[i]).data();
    std::copy(src.begin(), src.end(), data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return Tensor({indices.size(), 3, h, w}, std::move(data));
}

ImageDataset load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") files.push_back(entry.path());
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });

  ImageDataset ds;
  ds.provenance = dir.string();
  for (const auto& f : files) ds.samples.push_back(load_ppm(f));
  ds.validate();
  return ds;
}

void save_directory(const ImageDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    std::snprintf(name, sizeof name, "img_%05zu.ppm", i);
    save_ppm(dataset.samples[i], dir / name);
  }
}

}  // namespace safe
