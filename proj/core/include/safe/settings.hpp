#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "safe/dataset.hpp"
#include "safe/network.hpp"
#include "safe/trainer.hpp"

namespace safe {

/// Contents of a `train --config` file.
///
/// Keys (all optional):
///   latent_channels   comma list of d_i, one per branch     8,8
///   base_width        F                                      16
///   input_channels, height, width                            3, 32, 32
///   common_depth, branch_depth                               3, 4
///   batch_size, patience, max_epochs                         64, 20, 200
///   seed, split_seed                                         1, 1
///   train_snr_db                                             10
///   channel           awgn | rayleigh                        awgn
///   lr_stage_a, lr_high, lr_low                              1e-4, 1e-4, 1e-5
///   zero_init_new_branch                                     true
///   iterative_correction                                     false
///   strategy          1 | 2 | 3 (the CLI flag wins)          2
///   lr.<pattern>      per-group override, e.g. lr.sc_decoder_2 = 2e-5
struct TrainSettings {
  SafeConfig network;
  TrainPlan plan;
};

TrainSettings parse_train_settings(std::string_view text, const std::string& source = "<config>");
TrainSettings load_train_settings(const std::filesystem::path& path);
/// Every key with its current value, parseable by parse_train_settings.
std::string format_train_settings(const TrainSettings& settings);

/// Contents of a `gen-data --spec` file: count, height, width, seed.
SyntheticSpec parse_synthetic_spec(std::string_view text, const std::string& source = "<spec>");
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

}  // namespace safe
