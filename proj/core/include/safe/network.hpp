#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "safe/rational.hpp"
#include "safe/rng.hpp"
#include "safe/tensor.hpp"

namespace safe {

/// A named trainable tensor. `group` is the parameter group the name is
/// prefixed with (e.g. "sfe_encoder.1").
struct Parameter {
  std::string name;
  std::string group;
  Tensor tensor;
  bool trainable = true;

  void set_trainable(bool value) {
    trainable = value;
    tensor.set_requires_grad(value);
  }
};

enum class Activation { PReLU, ReLU, Linear };

struct ConvLayer {
  std::string name;
  bool transposed = false;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::size_t output_padding = 0;
  Activation activation = Activation::Linear;
  bool pool_after = false;  // 2x2 max pool after the activation

  Parameter weight;
  Parameter bias;
  std::optional<Parameter> slope;  // PReLU only

  Tensor forward(const Tensor& x) const;
};

/// Ordered stack of conv layers sharing a group name.
struct ParameterGroup {
  std::string name;
  std::vector<ConvLayer> layers;

  Tensor forward(const Tensor& x) const;
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  ParameterGroup clone_as(const std::string& new_name) const;
};

struct SafeConfig {
  std::vector<std::size_t> latent_channels{8, 8};  // d_i; its length is the branch count
  std::size_t base_width = 16;                     // F
  std::size_t input_channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t common_depth = 3;
  std::size_t branch_depth = 4;

  std::size_t branches() const { return latent_channels.size(); }
  /// Channel count at the end of the shared trunk (C = 2F).
  std::size_t trunk_channels() const { return 2 * base_width; }
  /// C_i = C * d_i / sum(d).
  std::size_t split_channels(std::size_t branch) const;

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;

  friend bool operator==(const SafeConfig&, const SafeConfig&) = default;
};

/// Paper-scale geometry: 224x224 RGB, two branches of 8 channels.
SafeConfig paper_config();

/// k_i / n = (H/8 * W/8 * d_i) / (H * W * input_channels).
Rational bandwidth_ratio(const SafeConfig& config, std::size_t branch);
Rational total_bandwidth_ratio(const SafeConfig& config);

struct SubSemantic {
  std::size_t index = 0;
  Tensor payload;  // [N, d_i, H/8, W/8]
};

/// Which trunk/decoder pair a forward pass uses. Secondary selects the
/// "_2" clones created by the second training stage when they exist.
enum class Route { Primary, Secondary };

namespace groups {
inline constexpr std::string_view kSmEncoder = "sm_encoder";
inline constexpr std::string_view kSmEncoder2 = "sm_encoder_2";
inline constexpr std::string_view kScDecoder = "sc_decoder";
inline constexpr std::string_view kScDecoder2 = "sc_decoder_2";
std::string sfe_encoder(std::size_t branch);
std::string sfr_decoder(std::size_t branch);
}  // namespace groups

/// Provenance carried alongside the weights (and in checkpoints).
struct NetworkInfo {
  std::uint32_t strategy = 0;        // 0 = untrained / not produced by a strategy
  std::uint32_t trained_levels = 0;  // branches trained so far (the X of TrainX)
  std::uint64_t split_seed = 0;      // dataset split used for training
};

/// Multi-branch codec: shared SM encoder, contiguous channel split, one
/// SFE encoder and SFR decoder per branch, and an SC decoder over the
/// channel concatenation of the recovered blocks.
///
/// Move-only; clone() gives an independent deep copy.
class SafeNetwork {
 public:
  static SafeNetwork build(const SafeConfig& config, Rng& rng);

  SafeNetwork(SafeNetwork&&) = default;
  SafeNetwork& operator=(SafeNetwork&&) = default;
  SafeNetwork(const SafeNetwork&) = delete;
  SafeNetwork& operator=(const SafeNetwork&) = delete;

  SafeNetwork clone() const;

  const SafeConfig& config() const { return config_; }
  NetworkInfo& info() { return info_; }
  const NetworkInfo& info() const { return info_; }

  std::vector<std::string> group_names() const;
  bool has_group(std::string_view name) const;
  ParameterGroup& group(std::string_view name);
  const ParameterGroup& group(std::string_view name) const;
  /// Appends a deep copy of `source` under `name`. Fails if `name` exists.
  ParameterGroup& add_group_clone(std::string_view source, const std::string& name);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find_parameter(std::string_view name);

  bool has_secondary_path() const;
  /// Secondary when a secondary path exists and the subset uses any branch
  /// other than 0; Primary otherwise.
  Route route_for(std::span<const std::size_t> subset) const;

  /// Trunk, split, and per-branch encoders, ending with per-sample power
  /// normalization of each payload. `subset` limits which branches run
  /// (all when empty).
  std::vector<SubSemantic> encode(const Tensor& image, Route route = Route::Primary,
                                  std::span<const std::size_t> subset = {}) const;

  /// Per-branch recovery, zero-fill for missing branches, channel concat, and
  /// the SC decoder. Output is unclamped.
  Tensor decode(std::span<const SubSemantic> received, Route route = Route::Primary) const;

  /// Convolution layers met by branch `branch` from image to reconstruction.
  std::size_t conv_layers_on_path(std::size_t branch) const;

 private:
  SafeNetwork() = default;
  const ParameterGroup& trunk(Route route) const;
  const ParameterGroup& combiner(Route route) const;

  SafeConfig config_;
  NetworkInfo info_;
  std::vector<ParameterGroup> groups_;
};

/// Validates a branch subset against `branches`: non-empty, in range, no
/// duplicates.
void validate_subset(std::span<const std::size_t> subset, std::size_t branches);

/// Clamps to [0, 1] (evaluation-time only; no graph).
Tensor clamp_unit(const Tensor& x);

}  // namespace safe
