// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Usage: acceptance [--work DIR] [--only N[,N...]]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "safe/channel.hpp"
#include "safe/checkpoint.hpp"
#include "safe/dataset.hpp"
#include "safe/evaluation.hpp"
#include "safe/grad_check.hpp"
#include "safe/image_io.hpp"
#include "safe/network.hpp"
#include "safe/pipeline.hpp"
#include "safe/settings.hpp"
#include "safe/trainer.hpp"

namespace fs = std::filesystem;
using namespace safe;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void cli_or_throw(std::vector<std::string> args) {
  args.insert(args.begin(), "safe");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  std::fputs(out.str().c_str(), stdout);
  std::fflush(stdout);
  if (code != 0) {
    std::string cmd;
    for (const auto& a : args) cmd += a + " ";
    throw std::runtime_error("command failed (" + std::to_string(code) + "): " + cmd + "| " + err.str());
  }
}

// Training-run report as written by the trainer.
struct Report {
  double initial_val_loss = 0.0;
  std::vector<double> val_loss;
};

Report read_report(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  Report r;
  std::string line;
  bool table = false;
  while (std::getline(in, line)) {
    if (line.rfind("# initial_val_loss: ", 0) == 0) r.initial_val_loss = std::stod(line.substr(20));
    if (line == "epoch train_loss val_loss") {
      table = true;
      continue;
    }
    if (table && !line.empty()) {
      std::istringstream row(line);
      double epoch = 0, train = 0, val = 0;
      row >> epoch >> train >> val;
      r.val_loss.push_back(val);
    }
  }
  return r;
}

class Harness {
 public:
  explicit Harness(fs::path work) : work_(std::move(work)) {}

  const fs::path& data_dir() {
    if (!data_ready_) {
      cli_or_throw({"gen-data", "--spec", SAFE_DESK_DATA, "--out", (work_ / "data").string()});
      data_ready_ = true;
    }
    return data_path_ = work_ / "data";
  }

  const TrainSettings& settings() {
    if (!settings_) settings_ = load_train_settings(SAFE_DESK_CONFIG);
    return *settings_;
  }

  DatasetSplit splits() { return split(load_directory(data_dir()), kDefaultSplit, settings().plan.split_seed); }

  /// Trains once per (strategy, tag) through the CLI; returns the run dir.
  fs::path run(int strategy, const std::string& tag = "") {
    const auto dir = work_ / ("strategy" + std::to_string(strategy) + tag);
    if (!fs::exists(dir / "stage_b.ckpt")) {
      const auto t0 = Clock::now();
      cli_or_throw({"train", "--strategy", std::to_string(strategy), "--config", SAFE_DESK_CONFIG, "--data",
                    data_dir().string(), "--out", dir.string()});
      train_seconds_[dir.string()] = seconds_since(t0);
    }
    return dir;
  }

  double train_seconds(const fs::path& dir) const {
    const auto it = train_seconds_.find(dir.string());
    return it == train_seconds_.end() ? 0.0 : it->second;
  }

  /// Criterion-7 evaluation of a strategy-2 run (cached CSV).
  fs::path sweep_csv(const fs::path& run_dir) {
    const auto csv = run_dir / "t2.csv";
    if (!fs::exists(csv)) {
      cli_or_throw({"sweep", "--checkpoint", (run_dir / "stage_b.ckpt").string(), "--data", data_dir().string(),
                    "--channel", "awgn", "--snrs", "0,5,10,15,20", "--trials", "16", "--seed", "1", "--csv",
                    csv.string()});
    }
    return csv;
  }

  const fs::path& work() const { return work_; }

 private:
  fs::path work_;
  fs::path data_path_;
  bool data_ready_ = false;
  std::optional<TrainSettings> settings_;
  std::map<std::string, double> train_seconds_;
};

Outcome gradient_oracle(Harness&) {
  const auto t0 = Clock::now();
  const auto reports = run_oracle_suite(20, 2024, 1e-4);
  const double secs = seconds_since(t0);
  const std::set<std::string> required{"conv2d", "conv_transpose2d", "maxpool2d", "prelu",
                                       "relu",   "mse_loss",         "power_normalize"};
  std::set<std::string> seen;
  bool ok = true;
  double worst = 0.0;
  std::string failing;
  for (const auto& r : reports) {
    seen.insert(r.name);
    worst = std::max(worst, r.max_rel_error);
    if (!r.passed || r.points != 20 || !(r.max_rel_error < 1e-4)) {
      ok = false;
      failing += " " + r.name;
    }
  }
  ok = ok && seen == required && secs < 60.0;
  return {ok, "7 ops x 20 points, worst rel err " + fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s" +
                  (failing.empty() ? "" : ", failing:" + failing)};
}

Outcome bandwidth(Harness&) {
  bool ok = true;
  std::string detail;
  for (std::size_t hw : {224u, 32u}) {
    SafeConfig c;
    c.height = c.width = hw;
    const auto r0 = bandwidth_ratio(c, 0), r1 = bandwidth_ratio(c, 1), total = total_bandwidth_ratio(c);
    ok = ok && r0 == Rational(1, 24) && r1 == Rational(1, 24) && total == Rational(1, 12);
    detail += std::to_string(hw) + ": " + r0.to_string() + " per branch, " + total.to_string() + " total; ";
  }
  return {ok, detail};
}

Outcome architecture(Harness&) {
  Rng rng(1);
  const auto net = SafeNetwork::build(paper_config(), rng);
  bool ok = true;
  std::string detail;
  for (std::size_t b = 0; b < 2; ++b) {
    // Walk the path group by group instead of trusting conv_layers_on_path.
    std::size_t convs = 0;
    for (const auto& g : {std::string(groups::kSmEncoder), groups::sfe_encoder(b), groups::sfr_decoder(b),
                          std::string(groups::kScDecoder)})
      convs += net.group(g).layers.size();
    ok = ok && convs == 14 && net.conv_layers_on_path(b) == 14;
    detail += "branch " + std::to_string(b) + ": " + std::to_string(convs) + " conv layers; ";
  }
  NoGradGuard guard;
  Rng data(2);
  std::vector<float> px(3 * 224 * 224);
  for (auto& v : px) v = static_cast<float>(data.uniform());
  const auto subs = net.encode(Tensor({1, 3, 224, 224}, px));
  for (const auto& s : subs) {
    ok = ok && s.payload.shape() == Shape{1, 8, 28, 28};
    detail += "S" + std::to_string(s.index) + " " + shape_string(s.payload.shape()) + " ";
  }
  return {ok && subs.size() == 2, detail};
}

Outcome channel_statistics(Harness&) {
  const auto t0 = Clock::now();
  const std::size_t n = 1'000'000;
  const auto zeros = Tensor::zeros({10, 100, 10, 100});
  bool ok = true;
  std::string detail;
  for (double snr : {0.0, 10.0, 20.0}) {
    Rng rng(Rng::derive(4, {static_cast<std::uint64_t>(snr)}));
    const auto t = transmit_awgn(zeros, {ChannelKind::Awgn, snr}, rng);
    double s2 = 0;
    for (float v : t.received.data()) s2 += double(v) * v;
    const double ratio = s2 / n / std::pow(10.0, -snr / 10.0);
    ok = ok && std::abs(ratio - 1.0) < 0.02;
    detail += "awgn " + fmt("%.0f", snr) + " dB var ratio " + fmt("%.4f", ratio) + "; ";
  }
  Rng rng(5);
  const auto ones = Tensor::full({n, 1, 1, 1}, 1.0f);
  const auto t = transmit_rayleigh(ones, {ChannelKind::Rayleigh, 10.0}, rng);
  double h2 = 0;
  for (double h : t.realization.fade) h2 += h * h;
  h2 /= static_cast<double>(t.realization.fade.size());
  ok = ok && t.realization.fade.size() == n && std::abs(h2 - 1.0) < 0.02;
  const double secs = seconds_since(t0);
  ok = ok && secs < 60.0;
  return {ok, detail + "rayleigh E[h^2] " + fmt("%.4f", h2) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome strategy1_guarantee(Harness& h) {
  const auto dir = h.run(1);
  const auto a = read_report(dir / "stage_a_report.txt");
  const auto b = read_report(dir / "stage_b_report.txt");
  // Recompute the Stage-A final validation loss from the checkpoint.
  const auto stage_a = load_checkpoint(dir / "stage_a.ckpt");
  const auto parts = h.splits();
  const std::vector<std::size_t> s0{0};
  const double a_final = validation_loss(stage_a, parts.val, s0, Route::Primary, h.settings().plan);
  const double rel = std::abs(b.initial_val_loss - a_final) / a_final;
  if (b.val_loss.empty()) return {false, "stage B report has no epochs"};
  const double b_best = *std::min_element(b.val_loss.begin(), b.val_loss.end());
  const bool ok = rel <= 1e-6 && b_best <= a_final;
  return {ok, "stage A final val " + fmt("%.6g", a_final) + ", stage B initial " + fmt("%.6g", b.initial_val_loss) +
                  " (rel diff " + fmt("%.1e", rel) + "), stage B best " + fmt("%.6g", b_best) + " over " +
                  std::to_string(b.val_loss.size()) + " epochs (stage A ran " + std::to_string(a.val_loss.size()) +
                  ")"};
}

Outcome stage_isolation(Harness& h) {
  const auto parts = h.splits();
  std::vector<std::size_t> idx(8);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Tensor probe = make_batch(parts.test, idx);
  const std::vector<std::size_t> s0{0};
  bool ok = true;
  std::string detail;
  for (int strategy : {1, 2}) {
    const auto dir = h.run(strategy);
    const auto before = load_checkpoint(dir / "stage_a.ckpt");
    const auto after = load_checkpoint(dir / "stage_b.ckpt");
    NoGradGuard guard;
    Rng r1(17), r2(17);
    const ChannelSpec ch{ChannelKind::Awgn, 10.0};
    const auto x = forward_pipeline(before, probe, ch, s0, r1).reconstruction;
    const auto y = forward_pipeline(after, probe, ch, s0, r2).reconstruction;
    const bool same = std::equal(x.data().begin(), x.data().end(), y.data().begin(), y.data().end());
    ok = ok && same;
    detail += "strategy " + std::to_string(strategy) + (same ? " bit-identical; " : " DIFFERS; ");
  }
  return {ok, detail + "probe = 8 test images"};
}

std::vector<SweepRecord> select(const std::vector<SweepRecord>& rs, std::uint32_t x, std::uint32_t y) {
  std::vector<SweepRecord> out;
  for (const auto& r : rs)
    if (r.train_x == x && r.trans_y == y) out.push_back(r);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.snr_db < b.snr_db; });
  return out;
}

Outcome ordering(Harness& h) {
  const auto dir = h.run(2);
  const auto records = read_csv(h.sweep_csv(dir));
  const auto t21 = select(records, 2, 1);
  const auto t22 = select(records, 2, 2);
  const std::vector<double> snrs{0, 5, 10, 15, 20};
  if (t21.size() != 5 || t22.size() != 5) return {false, "expected 5 rows each for Train2Trans1/Train2Trans2"};
  bool ok = true;
  std::string detail = "T2T2/T2T1 dB:";
  for (std::size_t i = 0; i < 5; ++i) {
    ok = ok && t21[i].snr_db == snrs[i] && t22[i].snr_db == snrs[i] && t21[i].trials == 16 && t22[i].trials == 16;
    ok = ok && t22[i].mean_psnr_db >= t21[i].mean_psnr_db;
    if (i > 0) {
      ok = ok && t22[i].mean_psnr_db >= t22[i - 1].mean_psnr_db - 0.5;
      ok = ok && t21[i].mean_psnr_db >= t21[i - 1].mean_psnr_db - 0.5;
    }
    detail += " " + fmt("%.0f", snrs[i]) + ":" + fmt("%.2f", t22[i].mean_psnr_db) + "/" +
              fmt("%.2f", t21[i].mean_psnr_db);
  }
  const double secs = h.train_seconds(dir);
  if (secs > 0) detail += "; training " + fmt("%.0f", secs) + " s";
  return {ok, detail};
}

Outcome learning_sanity(Harness& h) {
  const auto dir = h.run(2);
  const auto t22 = select(read_csv(h.sweep_csv(dir)), 2, 2);
  if (t22.empty() || t22.back().snr_db != 20.0) return {false, "no Train2Trans2 row at 20 dB"};
  const auto parts = h.splits();
  const double baseline = mean_image_baseline_psnr(parts.train, parts.test);
  const double model = t22.back().mean_psnr_db;
  return {model >= baseline + 3.0, "Train2Trans2 at 20 dB " + fmt("%.2f", model) + " dB vs mean-image baseline " +
                                       fmt("%.2f", baseline) + " dB (margin " + fmt("%.2f", model - baseline) + ")"};
}

Outcome determinism(Harness& h) {
  const auto a = h.run(2);
  const auto b = h.run(2, "_repeat");
  bool ok = true;
  std::string detail;
  for (const auto* f : {"stage_a.ckpt", "stage_b.ckpt"}) {
    const bool same = read_bytes(a / f) == read_bytes(b / f);
    ok = ok && same;
    detail += std::string(f) + (same ? " identical; " : " DIFFER; ");
  }
  const bool csv_same = read_bytes(h.sweep_csv(a)) == read_bytes(h.sweep_csv(b));
  ok = ok && csv_same;
  return {ok, detail + (csv_same ? "CSV identical" : "CSV DIFFERS")};
}

Outcome round_trips(Harness& h) {
  bool ok = true;
  std::string detail;
  // PPM: canonical files reproduce byte for byte; tensors within half a level.
  Rng rng(10);
  std::size_t ppm_files = 0;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::size_t w = 1 + rng.below(40), hgt = 1 + rng.below(40);
    std::string file = "P6\n" + std::to_string(w) + " " + std::to_string(hgt) + "\n255\n";
    for (std::size_t k = 0; k < 3 * w * hgt; ++k) file.push_back(static_cast<char>(rng.below(256)));
    ppm_files += encode_ppm(decode_ppm(file)) == file;
    std::vector<float> px(3 * w * hgt);
    for (auto& v : px) v = static_cast<float>(rng.uniform());
    const Tensor t({3, hgt, w}, px);
    const auto path = h.work() / "rt.ppm";
    save_ppm(t, path);
    const auto back = load_ppm(path);
    for (std::size_t k = 0; k < px.size(); ++k) worst = std::max(worst, double(std::abs(back.data()[k] - px[k])));
  }
  ok = ok && ppm_files == 50 && worst <= 0.5 / 255.0 + 1e-7;
  detail += "PPM " + std::to_string(ppm_files) + "/50 byte-exact, max err " + fmt("%.2e", worst) + "; ";

  // Checkpoint: trained strategy-2 network.
  const auto dir = h.run(2);
  const auto bytes = read_bytes(dir / "stage_b.ckpt");
  const auto net = load_checkpoint(dir / "stage_b.ckpt");
  const auto again = serialize_checkpoint(net);
  const bool ckpt = again == bytes;
  ok = ok && ckpt;
  detail += std::string("checkpoint ") + (ckpt ? "byte-exact; " : "DIFFERS; ");

  // CSV: the sweep records plus a saturated one.
  auto records = read_csv(h.sweep_csv(dir));
  SweepRecord sat;
  sat.strategy = 9;
  sat.channel = "none";
  sat.mean_psnr_db = INFINITY;
  sat.trials = 1;
  records.push_back(sat);
  const auto path = h.work() / "rt.csv";
  write_csv(records, path);
  const auto back = read_csv(path);
  bool csv = back.size() == records.size();
  for (std::size_t i = 0; csv && i < back.size(); ++i) {
    const auto& r = records[i];
    const auto& q = back[i];
    csv = r.strategy == q.strategy && r.train_x == q.train_x && r.trans_y == q.trans_y && r.channel == q.channel &&
          std::abs(r.snr_db - q.snr_db) <= 5e-5 && r.trials == q.trials &&
          (r.saturated() ? q.saturated() : std::abs(r.mean_psnr_db - q.mean_psnr_db) <= 5e-5) &&
          std::abs(r.std_psnr_db - q.std_psnr_db) <= 5e-5;
  }
  ok = ok && csv;
  detail += "CSV " + std::to_string(back.size()) + " records " + (csv ? "match at 4 decimals" : "MISMATCH");
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::fprintf(stderr, "usage: acceptance [--work DIR] [--only N[,N...]]\n");
      return 2;
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);
  Harness harness(work);

  const std::vector<std::pair<std::string, std::function<Outcome(Harness&)>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"bandwidth arithmetic", bandwidth},
      {"architecture conformance", architecture},
      {"channel statistics", channel_statistics},
      {"strategy-1 guarantee", strategy1_guarantee},
      {"stage isolation", stage_isolation},
      {"ordering property", ordering},
      {"learning sanity", learning_sanity},
      {"determinism", determinism},
      {"format round-trips", round_trips},
  };

  std::vector<std::string> lines;
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(number)) continue;
    Outcome o;
    try {
      o = criteria[i].second(harness);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.passed;
    char head[96];
    std::snprintf(head, sizeof head, "%s  %2d  %-26s ", o.passed ? "PASS" : "FAIL", number,
                  criteria[i].first.c_str());
    lines.push_back(head + o.detail);
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
  }
  std::printf("\n==== acceptance summary ====\n");
  for (const auto& l : lines) std::printf("%s\n", l.c_str());
  std::printf("%d of %zu criteria failed\n", failures, lines.size());
  return failures == 0 ? 0 : 1;
}
