#include "safe/settings.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "safe/key_value.hpp"

namespace safe {

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string real_text(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void unknown_key(const std::string& source, const KeyValueEntry& e) {
  throw KeyValueError(source, e.line, "unknown key '" + e.key + "'");
}

}  // namespace

TrainSettings parse_train_settings(std::string_view text, const std::string& source) {
  TrainSettings s;
  auto& n = s.network;
  auto& p = s.plan;
  for (const auto& e : parse_key_values(text, source)) {
    const auto& k = e.key;
    try {
      if (k == "latent_channels") n.latent_channels = parse_unsigned_list(e);
      else if (k == "base_width") n.base_width = parse_unsigned(e);
      else if (k == "input_channels") n.input_channels = parse_unsigned(e);
      else if (k == "height") n.height = parse_unsigned(e);
      else if (k == "width") n.width = parse_unsigned(e);
      else if (k == "common_depth") n.common_depth = parse_unsigned(e);
      else if (k == "branch_depth") n.branch_depth = parse_unsigned(e);
      else if (k == "batch_size") p.batch_size = parse_unsigned(e);
      else if (k == "patience") p.patience = parse_unsigned(e);
      else if (k == "max_epochs") p.max_epochs = parse_unsigned(e);
      else if (k == "seed") p.seed = parse_unsigned(e);
      else if (k == "split_seed") p.split_seed = parse_unsigned(e);
      else if (k == "train_snr_db") p.train_snr_db = parse_real(e);
      else if (k == "channel") p.channel = parse_channel_kind(e.value);
      else if (k == "lr_stage_a") p.stage_a_lr = parse_real(e);
      else if (k == "lr_high") p.high_lr = parse_real(e);
      else if (k == "lr_low") p.low_lr = parse_real(e);
      else if (k == "zero_init_new_branch") p.zero_init_new_branch = parse_bool(e);
      else if (k == "iterative_correction") p.iterative_correction = parse_bool(e);
      else if (k == "strategy") p.strategy = static_cast<int>(parse_unsigned(e));
      else if (k.starts_with("lr.") && k.size() > 3) p.lr_overrides.set(k.substr(3), parse_real(e));
      else unknown_key(source, e);
    } catch (const KeyValueError&) {
      throw;
    } catch (const std::exception& ex) {
      throw KeyValueError(source, e.line, ex.what());
    }
  }
  n.validate();
  p.validate();
  return s;
}

TrainSettings load_train_settings(const std::filesystem::path& path) {
  return parse_train_settings(read_text(path), path.string());
}

std::string format_train_settings(const TrainSettings& settings) {
  const auto& n = settings.network;
  const auto& p = settings.plan;
  std::ostringstream out;
  out << "latent_channels = ";
  for (std::size_t i = 0; i < n.latent_channels.size(); ++i) out << (i ? "," : "") << n.latent_channels[i];
  out << "\nbase_width = " << n.base_width << "\ninput_channels = " << n.input_channels << "\nheight = " << n.height
      << "\nwidth = " << n.width << "\ncommon_depth = " << n.common_depth << "\nbranch_depth = " << n.branch_depth
      << "\nstrategy = " << p.strategy << "\nbatch_size = " << p.batch_size << "\npatience = " << p.patience
      << "\nmax_epochs = " << p.max_epochs << "\nseed = " << p.seed << "\nsplit_seed = " << p.split_seed
      << "\ntrain_snr_db = " << real_text(p.train_snr_db) << "\nchannel = " << to_string(p.channel)
      << "\nlr_stage_a = " << real_text(p.stage_a_lr) << "\nlr_high = " << real_text(p.high_lr)
      << "\nlr_low = " << real_text(p.low_lr) << "\nzero_init_new_branch = " << (p.zero_init_new_branch ? "true" : "false")
      << "\niterative_correction = " << (p.iterative_correction ? "true" : "false") << "\n";
  for (const auto& [pattern, lr] : p.lr_overrides.entries()) out << "lr." << pattern << " = " << real_text(lr) << "\n";
  return out.str();
}

SyntheticSpec parse_synthetic_spec(std::string_view text, const std::string& source) {
  SyntheticSpec spec;
  for (const auto& e : parse_key_values(text, source)) {
    try {
      if (e.key == "count") spec.count = parse_unsigned(e);
      else if (e.key == "height") spec.height = parse_unsigned(e);
      else if (e.key == "width") spec.width = parse_unsigned(e);
      else if (e.key == "seed") spec.seed = parse_unsigned(e);
      else unknown_key(source, e);
    } catch (const KeyValueError&) {
      throw;
    } catch (const std::exception& ex) {
      throw KeyValueError(source, e.line, ex.what());
    }
  }
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  return parse_synthetic_spec(read_text(path), path.string());
}

}  // namespace safe
