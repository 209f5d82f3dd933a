#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "safe/channel.hpp"
#include "safe/dataset.hpp"
#include "safe/network.hpp"
#include "safe/optimizer.hpp"

namespace safe {

struct TrainPlan {
  int strategy = 2;
  std::size_t batch_size = 64;
  std::size_t patience = 20;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 1;  // recorded in checkpoints; the caller splits
  double train_snr_db = 10.0;
  ChannelKind channel = ChannelKind::Awgn;
  double stage_a_lr = 1e-4;  // every group in the first stage
  double high_lr = 1e-4;     // new branch encoders/decoders in the second stage
  double low_lr = 1e-5;      // cloned trunk/combiner in the second stage
  /// Zero the last SFR layer of every new branch before the second stage,
  /// so the stage starts exactly at the first stage's loss.
  bool zero_init_new_branch = true;
  /// Strategy 3 only: alternate Stage-B epochs with epochs that retrain
  /// the cloned trunk and decoder on branch 0 alone.
  bool iterative_correction = false;
  /// Consulted before the built-in per-stage rates.
  LearningRates lr_overrides;

  void validate() const;
};

struct TrainReport {
  std::string stage;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;    // per epoch; length == stop_epoch
  double initial_val_loss = 0.0;   // before the first update
  double best_val_loss = 0.0;      // min over initial and every epoch
  std::size_t best_epoch = 0;      // 0 = the initial state
  std::size_t stop_epoch = 0;
  std::string stop_reason;  // "patience" or "max_epochs"
  double wall_seconds = 0.0;
  std::string checkpoint_path;
};

/// Plain-text report: '#'-prefixed "key: value" lines, then the table
/// "epoch train_loss val_loss", one row per epoch.
void write_report(const TrainReport& report, const std::filesystem::path& path);

enum class StopDecision { Continue, Stop };

/// Stop iff the strictly lowest loss (first occurrence) lies more than
/// `patience` epochs before the latest entry.
StopDecision early_stop_check(std::span<const double> history, std::size_t patience);

void freeze_group(SafeNetwork& net, std::string_view group);
void unfreeze_group(SafeNetwork& net, std::string_view group);
void freeze_all(SafeNetwork& net);
/// Copies parameter values of `source` into `target` position by position.
void transfer_group(SafeNetwork& net, std::string_view source, std::string_view target);
/// Zeroes weight and bias of the group's last layer.
void zero_final_layer(SafeNetwork& net, std::string_view group);

struct StageSpec {
  std::string name;
  std::vector<std::size_t> subset;
  Route route = Route::Primary;
  LearningRates rates;
  std::uint64_t stream = 0;  // keys the shuffling and training-noise streams
  /// When set, even epochs train only these groups on `alternate_subset`
  /// (same route). Validation always uses `subset`.
  std::vector<std::string> alternate_groups;
  std::vector<std::size_t> alternate_subset;
};

/// Validation MSE over the whole set with noise that depends only on
/// (plan.seed, batch index, branch), identical across epochs and stages.
double validation_loss(const SafeNetwork& net, const ImageDataset& val, std::span<const std::size_t> subset,
                       Route route, const TrainPlan& plan);

/// Adam on the per-element MSE over every currently trainable
/// parameter, with early stopping on validation loss. The best state seen
/// (including the initial one) is restored before returning.
TrainReport train_stage(SafeNetwork& net, const ImageDataset& train, const ImageDataset& val, const StageSpec& stage,
                        const TrainPlan& plan);

struct StrategyResult {
  SafeNetwork network;   // after both stages
  SafeNetwork stage_a;   // snapshot after the first stage
  TrainReport stage_a_report;
  TrainReport stage_b_report;
};

/// Stage A trains {sm_encoder, sfe_encoder.0, sfr_decoder.0, sc_decoder}
/// with every other branch zero-filled. Stage B freezes all of that and
/// trains the remaining branches' SFE/SFR groups.
StrategyResult run_strategy1(const ImageDataset& train, const ImageDataset& val, const SafeConfig& config,
                             const TrainPlan& plan, const std::optional<std::filesystem::path>& out_dir = {});
/// As strategy 1, but Stage B also trains sc_decoder_2, a copy of
/// sc_decoder, at the low rate; the new branches use the high rate.
StrategyResult run_strategy2(const ImageDataset& train, const ImageDataset& val, const SafeConfig& config,
                             const TrainPlan& plan, const std::optional<std::filesystem::path>& out_dir = {});
/// Stage B freezes only branch 0's SFE/SFR groups, and trains copies
/// sm_encoder_2 and sc_decoder_2 (low rate) plus the new branches (high).
StrategyResult run_strategy3(const ImageDataset& train, const ImageDataset& val, const SafeConfig& config,
                             const TrainPlan& plan, const std::optional<std::filesystem::path>& out_dir = {});
/// Dispatches on plan.strategy.
StrategyResult run_strategy(const ImageDataset& train, const ImageDataset& val, const SafeConfig& config,
                            const TrainPlan& plan, const std::optional<std::filesystem::path>& out_dir = {});

}  // namespace safe
