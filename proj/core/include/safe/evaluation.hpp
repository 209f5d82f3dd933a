#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "safe/channel.hpp"
#include "safe/dataset.hpp"
#include "safe/network.hpp"

namespace safe {

struct EvalConfig {
  ChannelKind channel = ChannelKind::Awgn;
  std::vector<double> snrs_db{0, 5, 10, 15, 20};
  std::size_t trans = 2;  // transmit branches 0..trans-1
  std::size_t trials = 32;
  std::uint64_t seed = 1;
  std::optional<Route> route;  // default: net.route_for(subset)
  std::size_t batch_size = 64;
  std::size_t threads = 0;  // 0 = SAFE_THREADS, then hardware concurrency
};

struct SweepRecord {
  std::uint32_t strategy = 0;
  std::uint32_t train_x = 0;
  std::uint32_t trans_y = 0;
  std::string channel;
  double snr_db = 0.0;
  double mean_psnr_db = 0.0;  // +inf when saturated
  double std_psnr_db = 0.0;
  std::uint32_t trials = 0;

  bool saturated() const;
};

/// Worker count: `requested` if non-zero, else SAFE_THREADS if set and
/// non-zero, else hardware concurrency (at least 1).
std::size_t resolve_threads(std::size_t requested);

/// Mean over images of the clamped-reconstruction PSNR for one pass over
/// `dataset` (one trial).
double mean_dataset_psnr(const SafeNetwork& net, const ImageDataset& dataset, const ChannelSpec& channel,
                         std::span<const std::size_t> subset, std::uint64_t trial_seed,
                         std::optional<Route> route = std::nullopt, std::size_t batch_size = 64);

/// For each SNR and trial t, a fresh stream Rng(derive(seed, {t})) drives the
/// channel over the whole dataset; the record holds the mean and sample
/// standard deviation of the per-trial mean PSNR. Trials run in parallel;
/// results do not depend on the worker count.
std::vector<SweepRecord> evaluate(const SafeNetwork& net, const ImageDataset& dataset, const EvalConfig& config);

/// PSNR of predicting the per-pixel mean image of `reference` for every
/// sample of `dataset`, averaged over samples.
double mean_image_baseline_psnr(const ImageDataset& reference, const ImageDataset& dataset);

/// Rows sorted by (strategy, trainX, transY, channel, snr_db).
std::string format_csv(std::vector<SweepRecord> records);
std::vector<SweepRecord> parse_csv(const std::string& text);
void write_csv(const std::vector<SweepRecord>& records, const std::filesystem::path& path);
std::vector<SweepRecord> read_csv(const std::filesystem::path& path);

}  // namespace safe
