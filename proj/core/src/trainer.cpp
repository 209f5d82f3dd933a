#include "safe/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "safe/checkpoint.hpp"
#include "safe/ops.hpp"
#include "safe/pipeline.hpp"

namespace safe {

namespace {

// Stream tags under plan.seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kValStream = 2;
constexpr std::uint64_t kStageAStream = 3;
constexpr std::uint64_t kStageBStream = 4;

struct Snapshot {
  std::vector<std::vector<float>> values;
};

Snapshot take_snapshot(const std::vector<Parameter*>& params) {
  Snapshot s;
  s.values.reserve(params.size());
  for (const auto* p : params) {
    const auto d = p->tensor.data();
    s.values.emplace_back(d.begin(), d.end());
  }
  return s;
}

void restore_snapshot(const std::vector<Parameter*>& params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto d = params[i]->tensor.mutable_data();
    std::copy(s.values[i].begin(), s.values[i].end(), d.begin());
  }
}

std::vector<Parameter*> trainable_parameters(SafeNetwork& net) {
  std::vector<Parameter*> out;
  for (auto* p : net.parameters())
    if (p->trainable) out.push_back(p);
  return out;
}

double squared_error_sum(const Tensor& pred, const Tensor& target) {
  const auto a = pred.data();
  const auto b = target.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum;
}

std::vector<std::size_t> all_branches(const SafeConfig& config) {
  std::vector<std::size_t> v(config.branches());
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

LearningRates with_overrides(const TrainPlan& plan, std::initializer_list<std::pair<std::string, double>> rest) {
  LearningRates rates;
  for (const auto& [pattern, lr] : plan.lr_overrides.entries()) rates.set(pattern, lr);
  for (const auto& [pattern, lr] : rest) rates.set(pattern, lr);
  return rates;
}

void set_group_trainable(SafeNetwork& net, std::string_view group, bool value) {
  for (auto* p : net.group(group).parameters()) p->set_trainable(value);
}

struct StageA {
  SafeNetwork net;
  SafeNetwork snapshot;
  TrainReport report;
};

void save_stage(SafeNetwork& net, TrainReport& report, const std::optional<std::filesystem::path>& out_dir,
                const std::string& stem) {
  if (!out_dir) return;
  std::filesystem::create_directories(*out_dir);
  const auto ckpt = *out_dir / (stem + ".ckpt");
  save_checkpoint(net, ckpt);
  report.checkpoint_path = ckpt.string();
  write_report(report, *out_dir / (stem + "_report.txt"));
}

StageA run_stage_a(const ImageDataset& train, const ImageDataset& val, const SafeConfig& config,
                   const TrainPlan& plan, const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  plan.validate();
  if (config.branches() < 2)
    throw std::invalid_argument("training strategies need at least 2 branches, got " +
                                std::to_string(config.branches()));
  Rng init(Rng::derive(plan.seed, {kInitStream}));
  SafeNetwork net = SafeNetwork::build(config, init);
  net.info().strategy = static_cast<std::uint32_t>(plan.strategy);
  net.info().split_seed = plan.split_seed;

  freeze_all(net);
  for (auto g : {std::string(groups::kSmEncoder), groups::sfe_encoder(0), groups::sfr_decoder(0),
                 std::string(groups::kScDecoder)})
    unfreeze_group(net, g);

  StageSpec spec;
  spec.name = "stage_a";
  spec.subset = {0};
  spec.rates = with_overrides(plan, {{"*", plan.stage_a_lr}});
  spec.stream = kStageAStream;
  TrainReport report = train_stage(net, train, val, spec, plan);
  net.info().trained_levels = 1;
  save_stage(net, report, out_dir, "stage_a");
  SafeNetwork snapshot = net.clone();
  return {std::move(net), std::move(snapshot), std::move(report)};
}

StrategyResult run_stage_b(StageA a, const ImageDataset& train, const ImageDataset& val, const TrainPlan& plan,
                           const std::optional<std::filesystem::path>& out_dir, LearningRates rates, Route route,
                           const std::vector<std::string>& trained_groups,
                           std::vector<std::string> alternate_groups = {}) {
  SafeNetwork& net = a.net;
  freeze_all(net);
  for (const auto& g : trained_groups) unfreeze_group(net, g);
  const auto& config = net.config();
  if (plan.zero_init_new_branch)
    for (std::size_t b = 1; b < config.branches(); ++b) zero_final_layer(net, groups::sfr_decoder(b));

  StageSpec spec;
  spec.name = "stage_b";
  spec.subset = all_branches(config);
  spec.route = route;
  spec.rates = std::move(rates);
  spec.stream = kStageBStream;
  if (!alternate_groups.empty()) {
    spec.alternate_groups = std::move(alternate_groups);
    spec.alternate_subset = {0};
  }
  TrainReport report = train_stage(net, train, val, spec, plan);
  net.info().trained_levels = static_cast<std::uint32_t>(config.branches());
  save_stage(net, report, out_dir, "stage_b");
  return StrategyResult{std::move(net), std::move(a.snapshot), std::move(a.report), std::move(report)};
}

std::vector<std::string> new_branch_groups(const SafeConfig& config) {
  std::vector<std::string> out;
  for (std::size_t b = 1; b < config.branches(); ++b) {
    out.push_back(groups::sfe_encoder(b));
    out.push_back(groups::sfr_decoder(b));
  }
  return out;
}

}  // namespace

void TrainPlan::validate() const {
  if (strategy < 1 || strategy > 3)
    throw std::invalid_argument("strategy must be 1, 2 or 3, got " + std::to_string(strategy));
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
  if (!std::isfinite(train_snr_db)) throw std::invalid_argument("train_snr_db must be finite");
  if (channel == ChannelKind::Noiseless) throw std::invalid_argument("training needs a noisy channel");
  for (double lr : {stage_a_lr, high_lr, low_lr})
    if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rates must be positive");
}

void write_report(const TrainReport& report, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw std::runtime_error("cannot write report " + path.string());
  std::fprintf(f, "# stage: %s\n", report.stage.c_str());
  std::fprintf(f, "# stop_epoch: %zu\n", report.stop_epoch);
  std::fprintf(f, "# stop_reason: %s\n", report.stop_reason.c_str());
  std::fprintf(f, "# initial_val_loss: %.10g\n", report.initial_val_loss);
  std::fprintf(f, "# best_val_loss: %.10g\n", report.best_val_loss);
  std::fprintf(f, "# best_epoch: %zu\n", report.best_epoch);
  std::fprintf(f, "# checkpoint: %s\n", report.checkpoint_path.c_str());
  std::fprintf(f, "epoch train_loss val_loss\n");
  for (std::size_t i = 0; i < report.val_loss.size(); ++i)
    std::fprintf(f, "%zu %.10g %.10g\n", i + 1, report.train_loss[i], report.val_loss[i]);
  const bool ok = std::fclose(f) == 0;
  if (!ok) throw std::runtime_error("failed writing report " + path.string());
}

StopDecision early_stop_check(std::span<const double> history, std::size_t patience) {
  if (history.empty()) return StopDecision::Continue;
  const auto best = std::min_element(history.begin(), history.end()) - history.begin();
  const auto since = history.size() - 1 - static_cast<std::size_t>(best);
  return since > patience ? StopDecision::Stop : StopDecision::Continue;
}

void freeze_group(SafeNetwork& net, std::string_view group) { set_group_trainable(net, group, false); }
void unfreeze_group(SafeNetwork& net, std::string_view group) { set_group_trainable(net, group, true); }

void freeze_all(SafeNetwork& net) {
  for (auto* p : net.parameters()) p->set_trainable(false);
}

void transfer_group(SafeNetwork& net, std::string_view source, std::string_view target) {
  auto src = net.group(source).parameters();
  auto dst = net.group(target).parameters();
  if (src.size() != dst.size())
    throw std::invalid_argument("groups '" + std::string(source) + "' and '" + std::string(target) +
                                "' have different parameter counts");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->tensor.shape() != dst[i]->tensor.shape())
      throw std::invalid_argument("shape mismatch at parameter " + std::to_string(i) + ": " + src[i]->name + " " +
                                  shape_string(src[i]->tensor.shape()) + " vs " + dst[i]->name + " " +
                                  shape_string(dst[i]->tensor.shape()));
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto s = src[i]->tensor.data();
    auto d = dst[i]->tensor.mutable_data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

void zero_final_layer(SafeNetwork& net, std::string_view group) {
  auto& g = net.group(group);
  if (g.layers.empty()) throw std::invalid_argument("group '" + std::string(group) + "' has no layers");
  auto& last = g.layers.back();
  for (auto* p : {&last.weight, &last.bias}) {
    auto d = p->tensor.mutable_data();
    std::fill(d.begin(), d.end(), 0.0f);
  }
}

double validation_loss(const SafeNetwork& net, const ImageDataset& val, std::span<const std::size_t> subset,
                       Route route, const TrainPlan& plan) {
  if (val.empty()) throw std::invalid_argument("validation set is empty");
  NoGradGuard no_grad;
  const ChannelSpec channel{plan.channel, plan.train_snr_db};
  double total = 0.0;
  std::size_t elements = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0, b = 0; start < val.size(); start += plan.batch_size, ++b) {
    const auto end = std::min(val.size(), start + plan.batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor batch = make_batch(val, idx);
    Rng rng(Rng::derive(plan.seed, {kValStream, b}));
    const auto result = forward_pipeline(net, batch, channel, subset, rng, route);
    total += squared_error_sum(result.reconstruction, batch);
    elements += batch.numel();
  }
  return total / static_cast<double>(elements);
}

TrainReport train_stage(SafeNetwork& net, const ImageDataset& train, const ImageDataset& val, const StageSpec& stage,
                        const TrainPlan& plan) {
  plan.validate();
  if (train.empty()) throw std::invalid_argument("training set is empty");
  validate_subset(stage.subset, net.config().branches());
  const auto params = trainable_parameters(net);
  if (params.empty()) throw std::invalid_argument("stage '" + stage.name + "' has no trainable parameters");
  for (const auto* p : params)
    if (!stage.rates.lookup(p->group))
      throw std::invalid_argument("no learning rate for trainable group '" + p->group + "'");

  const auto t0 = std::chrono::steady_clock::now();
  const ChannelSpec channel{plan.channel, plan.train_snr_db};
  TrainReport report;
  report.stage = stage.name;
  report.initial_val_loss = validation_loss(net, val, stage.subset, stage.route, plan);
  report.best_val_loss = report.initial_val_loss;
  Snapshot best = take_snapshot(params);

  const bool alternating = !stage.alternate_groups.empty();
  std::vector<Parameter*> alternate_params;
  if (alternating) {
    validate_subset(stage.alternate_subset, net.config().branches());
    for (auto* p : params)
      if (std::find(stage.alternate_groups.begin(), stage.alternate_groups.end(), p->group) !=
          stage.alternate_groups.end())
        alternate_params.push_back(p);
    if (alternate_params.empty()) throw std::invalid_argument("alternate groups are not trainable");
  }

  AdamState adam;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= plan.max_epochs; ++epoch) {
    const bool alternate = alternating && epoch % 2 == 0;
    const auto& subset = alternate ? stage.alternate_subset : stage.subset;
    const auto& stepped = alternate ? alternate_params : params;
    Rng shuffler(Rng::derive(plan.seed, {stage.stream, epoch, 0}));
    shuffle(order.begin(), order.end(), shuffler);
    double sq_sum = 0.0;
    std::size_t elements = 0;
    for (std::size_t start = 0, b = 0; start < order.size(); start += plan.batch_size, ++b) {
      const auto end = std::min(order.size(), start + plan.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor batch = make_batch(train, idx);
      Rng noise(Rng::derive(plan.seed, {stage.stream, epoch, 1, b}));
      const auto result = forward_pipeline(net, batch, channel, subset, noise, stage.route);
      Tensor loss = mse_loss(result.reconstruction, batch);
      const double value = loss.item();
      if (!std::isfinite(value))
        throw std::runtime_error("training diverged in " + stage.name + " at epoch " + std::to_string(epoch));
      sq_sum += value * static_cast<double>(batch.numel());
      elements += batch.numel();
      backward(loss);
      adam_step(stepped, adam, stage.rates);
      if (alternate)
        for (auto* p : params) p->tensor.clear_grad();
    }
    report.train_loss.push_back(sq_sum / static_cast<double>(elements));
    const double v = validation_loss(net, val, stage.subset, stage.route, plan);
    report.val_loss.push_back(v);
    if (v < report.best_val_loss) {
      report.best_val_loss = v;
      report.best_epoch = epoch;
      best = take_snapshot(params);
    }
    report.stop_epoch = epoch;
    if (early_stop_check(report.val_loss, plan.patience) == StopDecision::Stop) {
      report.stop_reason = "patience";
      break;
    }
  }
  if (report.stop_reason.empty()) report.stop_reason = "max_epochs";
  restore_snapshot(params, best);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

StrategyResult run_strategy1(const ImageDataset& train, const ImageDataset& val, const SafeConfig& config,
                             const TrainPlan& plan, const std::optional<std::filesystem::path>& out_dir) {
  auto a = run_stage_a(train, val, config, plan, out_dir);
  auto rates = with_overrides(plan, {{"sfe_encoder.*", plan.high_lr}, {"sfr_decoder.*", plan.high_lr}});
  return run_stage_b(std::move(a), train, val, plan, out_dir, std::move(rates), Route::Primary,
                     new_branch_groups(config));
}

StrategyResult run_strategy2(const ImageDataset& train, const ImageDataset& val, const SafeConfig& config,
                             const TrainPlan& plan, const std::optional<std::filesystem::path>& out_dir) {
  auto a = run_stage_a(train, val, config, plan, out_dir);
  a.net.add_group_clone(groups::kScDecoder, std::string(groups::kScDecoder2));
  auto trained = new_branch_groups(config);
  trained.emplace_back(groups::kScDecoder2);
  auto rates = with_overrides(plan, {{"sfe_encoder.*", plan.high_lr},
                                     {"sfr_decoder.*", plan.high_lr},
                                     {std::string(groups::kScDecoder2), plan.low_lr}});
  return run_stage_b(std::move(a), train, val, plan, out_dir, std::move(rates), Route::Secondary, trained);
}

StrategyResult run_strategy3(const ImageDataset& train, const ImageDataset& val, const SafeConfig& config,
                             const TrainPlan& plan, const std::optional<std::filesystem::path>& out_dir) {
  auto a = run_stage_a(train, val, config, plan, out_dir);
  a.net.add_group_clone(groups::kSmEncoder, std::string(groups::kSmEncoder2));
  a.net.add_group_clone(groups::kScDecoder, std::string(groups::kScDecoder2));
  auto trained = new_branch_groups(config);
  trained.emplace_back(groups::kSmEncoder2);
  trained.emplace_back(groups::kScDecoder2);
  auto rates = with_overrides(plan, {{"sfe_encoder.*", plan.high_lr},
                                     {"sfr_decoder.*", plan.high_lr},
                                     {std::string(groups::kSmEncoder2), plan.low_lr},
                                     {std::string(groups::kScDecoder2), plan.low_lr}});
  std::vector<std::string> alternate;
  if (plan.iterative_correction) alternate = {std::string(groups::kSmEncoder2), std::string(groups::kScDecoder2)};
  return run_stage_b(std::move(a), train, val, plan, out_dir, std::move(rates), Route::Secondary, trained,
                     std::move(alternate));
}

StrategyResult run_strategy(const ImageDataset& train, const ImageDataset& val, const SafeConfig& config,
                            const TrainPlan& plan, const std::optional<std::filesystem::path>& out_dir) {
  switch (plan.strategy) {
    case 1: return run_strategy1(train, val, config, plan, out_dir);
    case 2: return run_strategy2(train, val, config, plan, out_dir);
    case 3: return run_strategy3(train, val, config, plan, out_dir);
    default: break;
  }
  plan.validate();
  throw std::invalid_argument("unknown strategy");
}

}  // namespace safe
