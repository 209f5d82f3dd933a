#include "safe/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "safe/metrics.hpp"
#include "safe/pipeline.hpp"

namespace safe {

bool SweepRecord::saturated() const { return std::isinf(mean_psnr_db); }

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SAFE_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

double mean_dataset_psnr(const SafeNetwork& net, const ImageDataset& dataset, const ChannelSpec& channel,
                         std::span<const std::size_t> subset, std::uint64_t trial_seed, std::optional<Route> route,
                         std::size_t batch_size) {
  NoGradGuard no_grad;
  Rng rng(trial_seed);
  double total = 0.0;
  std::vector<std::size_t> indices;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    indices.resize(std::min(batch_size, dataset.size() - start));
    std::iota(indices.begin(), indices.end(), start);
    const Tensor batch = make_batch(dataset, indices);
    const auto result = forward_pipeline(net, batch, channel, subset, rng, route);
    const Tensor recon = clamp_unit(result.reconstruction);
    const std::size_t stride = batch.numel() / indices.size();
    for (std::size_t i = 0; i < indices.size(); ++i) {
      total += psnr(batch.data().subspan(i * stride, stride), recon.data().subspan(i * stride, stride));
    }
  }
  return total / static_cast<double>(dataset.size());
}

std::vector<SweepRecord> evaluate(const SafeNetwork& net, const ImageDataset& dataset, const EvalConfig& config) {
  const auto& nc = net.config();
  if (dataset.empty()) throw std::invalid_argument("evaluation dataset is empty");
  if (dataset.height() != nc.height || dataset.width() != nc.width) {
    throw std::invalid_argument("dataset images are " + std::to_string(dataset.height()) + "x" +
                                std::to_string(dataset.width()) + " but the network expects " +
                                std::to_string(nc.height) + "x" + std::to_string(nc.width));
  }
  if (config.trans == 0 || config.trans > nc.branches()) {
    throw std::invalid_argument("trans " + std::to_string(config.trans) + " outside 1.." +
                                std::to_string(nc.branches()));
  }
  if (config.trials == 0) throw std::invalid_argument("trials must be >= 1");
  if (config.snrs_db.empty()) throw std::invalid_argument("SNR list must not be empty");
  if (config.batch_size == 0) throw std::invalid_argument("batch size must be >= 1");

  std::vector<std::size_t> subset(config.trans);
  std::iota(subset.begin(), subset.end(), 0);

  const std::size_t tasks = config.snrs_db.size() * config.trials;
  std::vector<double> results(tasks);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (std::size_t task = next++; task < tasks; task = next++) {
      try {
        const std::size_t s = task / config.trials;
        const std::size_t t = task % config.trials;
        const ChannelSpec channel{config.channel, config.snrs_db[s]};
        results[task] = mean_dataset_psnr(net, dataset, channel, subset, Rng::derive(config.seed, {t}), config.route,
                                          config.batch_size);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };

  const std::size_t workers = std::min(resolve_threads(config.threads), tasks);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<SweepRecord> records;
  for (std::size_t s = 0; s < config.snrs_db.size(); ++s) {
    SweepRecord rec;
    rec.strategy = net.info().strategy;
    rec.train_x = net.info().trained_levels;
    rec.trans_y = static_cast<std::uint32_t>(config.trans);
    rec.channel = to_string(config.channel);
    rec.snr_db = config.snrs_db[s];
    rec.trials = static_cast<std::uint32_t>(config.trials);
    const auto first = results.begin() + static_cast<std::ptrdiff_t>(s * config.trials);
    const std::vector<double> values(first, first + static_cast<std::ptrdiff_t>(config.trials));
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    rec.mean_psnr_db = mean;
    if (std::isfinite(mean) && values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      rec.std_psnr_db = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    records.push_back(rec);
  }
  return records;
}

double mean_image_baseline_psnr(const ImageDataset& reference, const ImageDataset& dataset) {
  if (reference.empty() || dataset.empty()) throw std::invalid_argument("baseline needs non-empty datasets");
  const std::size_t n = reference.samples.front().numel();
  std::vector<double> mean(n, 0.0);
  for (const auto& s : reference.samples) {
    if (s.numel() != n) throw std::invalid_argument("baseline datasets differ in image size");
    const auto d = s.data();
    for (std::size_t i = 0; i < n; ++i) mean[i] += d[i];
  }
  std::vector<float> prediction(n);
  for (std::size_t i = 0; i < n; ++i) prediction[i] = static_cast<float>(mean[i] / reference.size());
  double total = 0.0;
  for (const auto& s : dataset.samples) total += psnr(s.data(), prediction);
  return total / static_cast<double>(dataset.size());
}

namespace {

constexpr const char* kHeader = "strategy,trainX,transY,channel,snr_db,mean_psnr_db,std_psnr_db,trials";

std::string fixed4(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

double parse_number(const std::string& field, std::size_t line) {
  if (field == "inf") return std::numeric_limits<double>::infinity();
  if (field == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used == field.size()) return v;
  } catch (const std::exception&) {
  }
  throw std::runtime_error("CSV line " + std::to_string(line) + ": bad number '" + field + "'");
}

}  // namespace

std::string format_csv(std::vector<SweepRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const SweepRecord& a, const SweepRecord& b) {
    return std::tie(a.strategy, a.train_x, a.trans_y, a.channel, a.snr_db) <
           std::tie(b.strategy, b.train_x, b.trans_y, b.channel, b.snr_db);
  });
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.strategy) + "," + std::to_string(r.train_x) + "," + std::to_string(r.trans_y) + "," +
           r.channel + "," + fixed4(r.snr_db) + "," + fixed4(r.mean_psnr_db) + "," + fixed4(r.std_psnr_db) + "," +
           std::to_string(r.trials) + "\n";
  }
  return out;
}

std::vector<SweepRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw std::runtime_error("CSV header mismatch");
  std::vector<SweepRecord> records;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8) throw std::runtime_error("CSV line " + std::to_string(number) + ": expected 8 fields");
    SweepRecord r;
    r.strategy = static_cast<std::uint32_t>(parse_number(fields[0], number));
    r.train_x = static_cast<std::uint32_t>(parse_number(fields[1], number));
    r.trans_y = static_cast<std::uint32_t>(parse_number(fields[2], number));
    r.channel = fields[3];
    r.snr_db = parse_number(fields[4], number);
    r.mean_psnr_db = parse_number(fields[5], number);
    r.std_psnr_db = parse_number(fields[6], number);
    r.trials = static_cast<std::uint32_t>(parse_number(fields[7], number));
    records.push_back(r);
  }
  return records;
}

void write_csv(const std::vector<SweepRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_csv(records);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<SweepRecord> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

}  // namespace safe
