#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "safe/checkpoint.hpp"
#include "safe/dataset.hpp"
#include "safe/evaluation.hpp"
#include "safe/grad_check.hpp"
#include "safe/image_io.hpp"
#include "safe/metrics.hpp"
#include "safe/pipeline.hpp"
#include "safe/settings.hpp"
#include "safe/trainer.hpp"

namespace safe::cli {

namespace {

std::vector<double> parse_snr_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw std::invalid_argument("bad SNR value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty SNR list");
  return out;
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

std::optional<Route> parse_route(const std::string& text) {
  if (text == "auto") return std::nullopt;
  if (text == "primary") return Route::Primary;
  if (text == "secondary") return Route::Secondary;
  throw std::invalid_argument("route must be auto, primary or secondary, got '" + text + "'");
}

/// The portion of a data directory a command works on. Checkpoints record
/// the split seed used for training, so "test" stays held out.
ImageDataset select_split(const ImageDataset& all, const std::string& which, std::uint64_t split_seed) {
  if (which == "all") return all;
  auto parts = split(all, kDefaultSplit, split_seed);
  if (which == "train") return std::move(parts.train);
  if (which == "val") return std::move(parts.val);
  if (which == "test") return std::move(parts.test);
  throw std::invalid_argument("split must be train, val, test or all, got '" + which + "'");
}

struct EvalArgs {
  std::string data;
  std::string channel = "awgn";
  std::string snrs = "0,5,10,15,20";
  std::size_t trials = 32;
  std::uint64_t seed = 1;
  std::string csv;
  std::string split = "test";
  std::string route = "auto";
};

void add_eval_options(CLI::App& cmd, EvalArgs& a) {
  cmd.add_option("--data", a.data, "Directory of .ppm images")->required();
  cmd.add_option("--snrs", a.snrs, "Comma-separated SNRs in dB")->capture_default_str();
  cmd.add_option("--trials", a.trials, "Channel realizations per SNR")->capture_default_str()->check(
      CLI::PositiveNumber);
  cmd.add_option("--seed", a.seed, "Evaluation seed")->capture_default_str();
  cmd.add_option("--csv", a.csv, "Output CSV path (stdout when omitted)");
  cmd.add_option("--split", a.split, "train | val | test | all")->capture_default_str();
}

void emit_csv(const std::vector<SweepRecord>& records, const std::string& path, std::ostream& out) {
  if (path.empty())
    out << format_csv(records);
  else
    write_csv(records, path);
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir, std::ostream& out) {
  const SyntheticSpec spec = spec_path.empty() ? SyntheticSpec{} : load_synthetic_spec(spec_path);
  const auto ds = synth_dataset(spec);
  save_directory(ds, out_dir);
  out << "wrote " << ds.size() << " images to " << out_dir << "\n";
  return 0;
}

int cmd_train(int strategy, const std::string& config_path, const std::string& data_dir, const std::string& out_dir,
              std::ostream& out) {
  TrainSettings settings = config_path.empty() ? TrainSettings{} : load_train_settings(config_path);
  if (strategy != 0) settings.plan.strategy = strategy;
  settings.plan.validate();
  const auto all = load_directory(data_dir);
  if (all.height() != settings.network.height || all.width() != settings.network.width)
    throw std::invalid_argument("data images are " + std::to_string(all.height()) + "x" + std::to_string(all.width()) +
                                " but the config expects " + std::to_string(settings.network.height) + "x" +
                                std::to_string(settings.network.width));
  const auto parts = split(all, kDefaultSplit, settings.plan.split_seed);
  auto result = run_strategy(parts.train, parts.val, settings.network, settings.plan, std::filesystem::path(out_dir));
  for (const auto* r : {&result.stage_a_report, &result.stage_b_report})
    out << r->stage << ": epochs " << r->stop_epoch << " (" << r->stop_reason << "), val loss "
        << r->initial_val_loss << " -> " << r->best_val_loss << ", " << r->wall_seconds << " s, " << r->checkpoint_path
        << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const EvalArgs& a, std::size_t trans, std::ostream& out) {
  const auto net = load_checkpoint(ckpt);
  const auto all = load_directory(a.data);
  const auto ds = select_split(all, a.split, net.info().split_seed);
  EvalConfig cfg;
  cfg.channel = parse_channel_kind(a.channel);
  cfg.snrs_db = parse_snr_list(a.snrs);
  cfg.trans = trans;
  cfg.trials = a.trials;
  cfg.seed = a.seed;
  cfg.route = parse_route(a.route);
  emit_csv(evaluate(net, ds, cfg), a.csv, out);
  return 0;
}

int cmd_sweep(const std::vector<std::string>& ckpts, const EvalArgs& a, std::ostream& out) {
  const auto all = load_directory(a.data);
  std::vector<SweepRecord> records;
  for (const auto& path : ckpts) {
    const auto net = load_checkpoint(path);
    const auto ds = select_split(all, a.split, net.info().split_seed);
    const std::size_t trained = std::max<std::size_t>(net.info().trained_levels, 1);
    for (const auto& channel : split_commas(a.channel)) {
      for (std::size_t y = 1; y <= std::min(trained, net.config().branches()); ++y) {
        EvalConfig cfg;
        cfg.channel = parse_channel_kind(channel);
        cfg.snrs_db = parse_snr_list(a.snrs);
        cfg.trans = y;
        cfg.trials = a.trials;
        cfg.seed = a.seed;
        auto recs = evaluate(net, ds, cfg);
        records.insert(records.end(), recs.begin(), recs.end());
      }
    }
  }
  emit_csv(records, a.csv, out);
  return 0;
}

int cmd_gradcheck(std::size_t points, std::uint64_t seed, double tol, std::ostream& out) {
  bool ok = true;
  for (const auto& r : run_oracle_suite(points, seed, tol)) {
    char line[160];
    std::snprintf(line, sizeof line, "%-18s %s  max rel err %.3e (tol %.0e, %zu points)\n", r.name.c_str(),
                  r.passed ? "PASS" : "FAIL", r.max_rel_error, r.tolerance, r.points);
    out << line;
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int cmd_reconstruct(const std::string& ckpt, const std::string& in, const std::string& out_path, double snr,
                    const std::string& channel, std::size_t trans, std::uint64_t seed, const std::string& route,
                    std::ostream& out) {
  const auto net = load_checkpoint(ckpt);
  const Tensor image = load_ppm(in);
  if (trans == 0 || trans > net.config().branches())
    throw std::invalid_argument("--trans must be in 1.." + std::to_string(net.config().branches()));
  std::vector<std::size_t> subset(trans);
  std::iota(subset.begin(), subset.end(), std::size_t{0});
  const auto shape = image.shape();
  Tensor batch = Tensor::zeros({1, shape[0], shape[1], shape[2]});
  {
    const auto src = image.data();
    auto dst = batch.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  NoGradGuard no_grad;
  Rng rng(Rng::derive(seed, {0}));
  const auto result =
      forward_pipeline(net, batch, ChannelSpec{parse_channel_kind(channel), snr}, subset, rng, parse_route(route));
  const Tensor recon = clamp_unit(result.reconstruction);
  Tensor single = Tensor::zeros(image.shape());
  const auto r = recon.data();
  auto d = single.mutable_data();
  std::copy(r.begin(), r.end(), d.begin());
  save_ppm(single, out_path);
  out << "psnr " << psnr(image, single) << " dB -> " << out_path << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-branch semantic image codec: data generation, training and evaluation", "safe"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as .ppm files");
  std::string spec_path, gen_out;
  gen->add_option("--spec", spec_path, "Synthetic spec file (count, height, width, seed)");
  gen->add_option("--out", gen_out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Two-stage training with one of the three strategies");
  int strategy = 0;
  std::string config_path, train_data, train_out;
  train->add_option("--strategy", strategy, "1, 2 or 3 (overrides the config)")->check(CLI::Range(1, 3));
  train->add_option("--config", config_path, "Training config file");
  train->add_option("--data", train_data, "Directory of .ppm images")->required();
  train->add_option("--out", train_out, "Output directory for checkpoints and reports")->required();

  auto* eval = app.add_subcommand("eval", "PSNR-vs-SNR evaluation of one checkpoint");
  EvalArgs eval_args;
  std::string eval_ckpt;
  std::size_t trans = 2;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  add_eval_options(*eval, eval_args);
  eval->add_option("--channel", eval_args.channel, "awgn | rayleigh | none")->capture_default_str();
  eval->add_option("--trans", trans, "Branches transmitted (0..trans-1)")->capture_default_str()->check(
      CLI::PositiveNumber);
  eval->add_option("--route", eval_args.route, "auto | primary | secondary")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "TrainXTransY matrix over checkpoints and channels");
  EvalArgs sweep_args;
  std::vector<std::string> sweep_ckpts;
  sweep->add_option("--checkpoint", sweep_ckpts, "Checkpoint file (repeatable)")->required();
  add_eval_options(*sweep, sweep_args);
  sweep->add_option("--channel", sweep_args.channel, "Comma-separated channel kinds")->capture_default_str();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  std::size_t points = 20;
  std::uint64_t grad_seed = 2024;
  double tol = 1e-4;
  grad->add_option("--points", points, "Random points per op")->capture_default_str();
  grad->add_option("--seed", grad_seed, "Seed")->capture_default_str();
  grad->add_option("--tol", tol, "Max relative error")->capture_default_str();

  auto* rec = app.add_subcommand("reconstruct", "Send one image through the codec and save the result");
  std::string rec_ckpt, rec_in, rec_out, rec_channel = "awgn", rec_route = "auto";
  double snr = 10.0;
  std::size_t rec_trans = 2;
  std::uint64_t rec_seed = 1;
  rec->add_option("--checkpoint", rec_ckpt, "Checkpoint file")->required();
  rec->add_option("--in", rec_in, "Input .ppm")->required();
  rec->add_option("--out", rec_out, "Output .ppm")->required();
  rec->add_option("--snr", snr, "Channel SNR in dB")->capture_default_str();
  rec->add_option("--channel", rec_channel, "awgn | rayleigh | none")->capture_default_str();
  rec->add_option("--trans", rec_trans, "Branches transmitted")->capture_default_str();
  rec->add_option("--seed", rec_seed, "Noise seed")->capture_default_str();
  rec->add_option("--route", rec_route, "auto | primary | secondary")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*gen) return cmd_gen_data(spec_path, gen_out, out);
    if (*train) return cmd_train(strategy, config_path, train_data, train_out, out);
    if (*eval) return cmd_eval(eval_ckpt, eval_args, trans, out);
    if (*sweep) return cmd_sweep(sweep_ckpts, sweep_args, out);
    if (*grad) return cmd_gradcheck(points, grad_seed, tol, out);
    if (*rec)
      return cmd_reconstruct(rec_ckpt, rec_in, rec_out, snr, rec_channel, rec_trans, rec_seed, rec_route, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace safe::cli
