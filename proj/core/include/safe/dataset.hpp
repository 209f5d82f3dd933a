#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "safe/tensor.hpp"

namespace safe {

/// Images of identical size, each a Tensor [3,H,W] with values in [0,1].
struct ImageDataset {
  std::vector<Tensor> samples;
  std::string provenance;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t height() const { return samples.empty() ? 0 : samples.front().dim(1); }
  std::size_t width() const { return samples.empty() ? 0 : samples.front().dim(2); }

  /// Throws if shapes differ or any value lies outside [0,1].
  void validate() const;
};

struct SyntheticSpec {
  std::size_t count = 512;
  std::size_t height = 32;
  std::size_t width = 32;
  std::uint64_t seed = 1;
};

/// Deterministic images of 3-8 overlapping anti-aliased rectangles, ellipses
/// and gradient patches in random colors over a solid or gradient background.
ImageDataset synth_dataset(const SyntheticSpec& spec);

struct DatasetSplit {
  ImageDataset train;
  ImageDataset val;
  ImageDataset test;
};

/// Default train/val/test fractions.
inline constexpr std::array<double, 3> kDefaultSplit{0.8, 0.1, 0.1};

/// Seeded shuffle, then floor(f0*n) train, floor(f1*n) validation, and the
/// remainder test.
DatasetSplit split(const ImageDataset& dataset, std::array<double, 3> fractions, std::uint64_t seed);

/// Stacks the selected samples into [N,3,H,W].
Tensor make_batch(const ImageDataset& dataset, std::span<const std::size_t> indices);

/// All *.ppm files in `dir` (non-recursive), in lexicographic filename order.
ImageDataset load_directory(const std::filesystem::path& dir);
/// Writes img_00000.ppm, img_00001.ppm, ... (creating `dir`).
void save_directory(const ImageDataset& dataset, const std::filesystem::path& dir);

}  // namespace safe
