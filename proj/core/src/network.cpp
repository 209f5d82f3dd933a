#include "safe/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "safe/channel.hpp"
#include "safe/ops.hpp"

namespace safe {

namespace groups {
std::string sfe_encoder(std::size_t branch) { return "sfe_encoder." + std::to_string(branch); }
std::string sfr_decoder(std::size_t branch) { return "sfr_decoder." + std::to_string(branch); }
}  // namespace groups

Tensor ConvLayer::forward(const Tensor& x) const {
  Tensor y = transposed ? conv_transpose2d(x, weight.tensor, bias.tensor, stride, padding, output_padding)
                        : conv2d(x, weight.tensor, bias.tensor, stride, padding);
  switch (activation) {
    case Activation::PReLU:
      y = prelu(y, slope->tensor);
      break;
    case Activation::ReLU:
      y = relu(y);
      break;
    case Activation::Linear:
      break;
  }
  return pool_after ? maxpool2d(y) : y;
}

Tensor ParameterGroup::forward(const Tensor& x) const {
  Tensor y = x;
  for (const auto& layer : layers) y = layer.forward(y);
  return y;
}

std::vector<Parameter*> ParameterGroup::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
    if (layer.slope) out.push_back(&*layer.slope);
  }
  return out;
}

std::vector<const Parameter*> ParameterGroup::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& layer : layers) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
    if (layer.slope) out.push_back(&*layer.slope);
  }
  return out;
}

ParameterGroup ParameterGroup::clone_as(const std::string& new_name) const {
  ParameterGroup copy{new_name, layers};
  auto rebind = [&](Parameter& p) {
    p.name = new_name + p.name.substr(name.size());
    p.group = new_name;
    p.tensor = p.tensor.clone();
  };
  for (auto& layer : copy.layers) {
    rebind(layer.weight);
    rebind(layer.bias);
    if (layer.slope) rebind(*layer.slope);
  }
  return copy;
}

std::size_t SafeConfig::split_channels(std::size_t branch) const {
  const auto total = std::accumulate(latent_channels.begin(), latent_channels.end(), std::size_t{0});
  return trunk_channels() * latent_channels.at(branch) / total;
}

void SafeConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid SafeConfig: " + what); };
  if (latent_channels.empty()) fail("at least one branch (L >= 1) is required");
  for (auto d : latent_channels)
    if (d == 0) fail("every latent channel count d_i must be >= 1");
  if (base_width == 0) fail("base_width must be >= 1");
  if (input_channels == 0) fail("input_channels must be >= 1");
  if (height == 0 || width == 0 || height % 8 != 0 || width % 8 != 0) {
    fail("height and width must be positive multiples of 8, got " + std::to_string(height) + "x" +
         std::to_string(width));
  }
  if (common_depth < 3) fail("common_depth must be >= 3");
  if (branch_depth < 2) fail("branch_depth must be >= 2");
  const auto total = std::accumulate(latent_channels.begin(), latent_channels.end(), std::size_t{0});
  for (std::size_t i = 0; i < latent_channels.size(); ++i) {
    if ((trunk_channels() * latent_channels[i]) % total != 0 || trunk_channels() * latent_channels[i] < total) {
      fail("split width 2F*d_i/sum(d) must be a positive integer for branch " + std::to_string(i));
    }
  }
}

SafeConfig paper_config() {
  SafeConfig c;
  c.height = 224;
  c.width = 224;
  return c;
}

Rational bandwidth_ratio(const SafeConfig& config, std::size_t branch) {
  if (branch >= config.branches()) {
    throw std::out_of_range("branch " + std::to_string(branch) + " out of range for L = " +
                            std::to_string(config.branches()));
  }
  const auto k = static_cast<std::int64_t>((config.height / 8) * (config.width / 8) * config.latent_channels[branch]);
  const auto n = static_cast<std::int64_t>(config.height * config.width * config.input_channels);
  return Rational(k, n);
}

Rational total_bandwidth_ratio(const SafeConfig& config) {
  Rational total(0);
  for (std::size_t i = 0; i < config.branches(); ++i) total = total + bandwidth_ratio(config, i);
  return total;
}

namespace {

struct LayerPlan {
  bool transposed;
  std::size_t in, out;
  Activation activation;
  bool pool_after;
};

ConvLayer make_layer(const std::string& group, std::size_t index, const LayerPlan& plan, Rng& rng) {
  ConvLayer layer;
  layer.name = (plan.transposed ? "deconv" : "conv") + std::to_string(index);
  layer.transposed = plan.transposed;
  layer.in_channels = plan.in;
  layer.out_channels = plan.out;
  layer.kernel = 3;
  layer.stride = plan.transposed ? 2 : 1;
  layer.padding = 1;
  layer.output_padding = plan.transposed ? 1 : 0;
  layer.activation = plan.activation;
  layer.pool_after = plan.pool_after;

  const std::string prefix = group + "." + layer.name;
  const std::size_t k2 = layer.kernel * layer.kernel;
  // Fan-in counts the inputs that reach one output; a stride-2 transposed
  // conv touches a quarter of its kernel taps per output position.
  double fan_in = static_cast<double>(plan.in * k2);
  if (plan.transposed) fan_in /= static_cast<double>(layer.stride * layer.stride);
  const double gain = plan.activation == Activation::Linear ? 1.0 : 2.0;
  const double stddev = std::sqrt(gain / fan_in);

  const Shape wshape = plan.transposed ? Shape{plan.in, plan.out, 3, 3} : Shape{plan.out, plan.in, 3, 3};
  std::vector<float> w(shape_numel(wshape));
  for (auto& v : w) v = static_cast<float>(stddev * rng.normal());

  layer.weight = Parameter{prefix + ".weight", group, Tensor(wshape, std::move(w), true), true};
  layer.bias = Parameter{prefix + ".bias", group, Tensor::zeros({plan.out}, true), true};
  if (plan.activation == Activation::PReLU) {
    layer.slope = Parameter{prefix + ".slope", group, Tensor::scalar(0.25f, true), true};
  }
  return layer;
}

ParameterGroup make_group(const std::string& name, const std::vector<LayerPlan>& plans, Rng& rng) {
  ParameterGroup g{name, {}};
  for (std::size_t i = 0; i < plans.size(); ++i) g.layers.push_back(make_layer(name, i + 1, plans[i], rng));
  return g;
}

}  // namespace

SafeNetwork SafeNetwork::build(const SafeConfig& config, Rng& rng) {
  config.validate();
  SafeNetwork net;
  net.config_ = config;

  const std::size_t f = config.base_width;
  const std::size_t c = config.trunk_channels();

  std::vector<LayerPlan> sm{{false, config.input_channels, f, Activation::PReLU, true},
                            {false, f, 2 * f, Activation::PReLU, true}};
  for (std::size_t i = 2; i < config.common_depth; ++i) sm.push_back({false, 2 * f, c, Activation::PReLU, false});
  net.groups_.push_back(make_group(std::string(groups::kSmEncoder), sm, rng));

  for (std::size_t b = 0; b < config.branches(); ++b) {
    const std::size_t ci = config.split_channels(b);
    std::vector<LayerPlan> sfe;
    for (std::size_t i = 0; i + 1 < config.branch_depth; ++i)
      sfe.push_back({false, ci, ci, Activation::PReLU, i + 2 == config.branch_depth});
    sfe.push_back({false, ci, config.latent_channels[b], Activation::PReLU, false});
    net.groups_.push_back(make_group(groups::sfe_encoder(b), sfe, rng));
  }
  for (std::size_t b = 0; b < config.branches(); ++b) {
    const std::size_t ci = config.split_channels(b);
    std::vector<LayerPlan> sfr{{false, config.latent_channels[b], ci, Activation::ReLU, false},
                               {true, ci, ci, Activation::ReLU, false}};
    for (std::size_t i = 2; i < config.branch_depth; ++i) sfr.push_back({false, ci, ci, Activation::ReLU, false});
    net.groups_.push_back(make_group(groups::sfr_decoder(b), sfr, rng));
  }

  std::vector<LayerPlan> sc{{true, c, 2 * f, Activation::ReLU, false}, {true, 2 * f, f, Activation::ReLU, false}};
  for (std::size_t i = 3; i < config.common_depth; ++i) sc.push_back({false, f, f, Activation::ReLU, false});
  sc.push_back({false, f, config.input_channels, Activation::Linear, false});
  net.groups_.push_back(make_group(std::string(groups::kScDecoder), sc, rng));
  return net;
}

SafeNetwork SafeNetwork::clone() const {
  SafeNetwork copy;
  copy.config_ = config_;
  copy.info_ = info_;
  for (const auto& g : groups_) copy.groups_.push_back(g.clone_as(g.name));
  return copy;
}

std::vector<std::string> SafeNetwork::group_names() const {
  std::vector<std::string> names;
  for (const auto& g : groups_) names.push_back(g.name);
  return names;
}

bool SafeNetwork::has_group(std::string_view name) const {
  return std::any_of(groups_.begin(), groups_.end(), [&](const auto& g) { return g.name == name; });
}

ParameterGroup& SafeNetwork::group(std::string_view name) {
  for (auto& g : groups_)
    if (g.name == name) return g;
  throw std::invalid_argument("unknown parameter group '" + std::string(name) + "'");
}

const ParameterGroup& SafeNetwork::group(std::string_view name) const {
  for (const auto& g : groups_)
    if (g.name == name) return g;
  throw std::invalid_argument("unknown parameter group '" + std::string(name) + "'");
}

ParameterGroup& SafeNetwork::add_group_clone(std::string_view source, const std::string& name) {
  if (has_group(name)) throw std::invalid_argument("parameter group '" + name + "' already exists");
  auto copy = group(source).clone_as(name);
  groups_.push_back(std::move(copy));
  return groups_.back();
}

std::vector<Parameter*> SafeNetwork::parameters() {
  std::vector<Parameter*> out;
  for (auto& g : groups_) {
    auto ps = g.parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

std::vector<const Parameter*> SafeNetwork::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& g : groups_) {
    auto ps = g.parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

Parameter* SafeNetwork::find_parameter(std::string_view name) {
  for (auto* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

bool SafeNetwork::has_secondary_path() const {
  return has_group(groups::kScDecoder2) || has_group(groups::kSmEncoder2);
}

Route SafeNetwork::route_for(std::span<const std::size_t> subset) const {
  if (!has_secondary_path()) return Route::Primary;
  const bool beyond_first = std::any_of(subset.begin(), subset.end(), [](std::size_t i) { return i != 0; });
  return beyond_first ? Route::Secondary : Route::Primary;
}

const ParameterGroup& SafeNetwork::trunk(Route route) const {
  if (route == Route::Secondary && has_group(groups::kSmEncoder2)) return group(groups::kSmEncoder2);
  return group(groups::kSmEncoder);
}

const ParameterGroup& SafeNetwork::combiner(Route route) const {
  if (route == Route::Secondary && has_group(groups::kScDecoder2)) return group(groups::kScDecoder2);
  return group(groups::kScDecoder);
}

void validate_subset(std::span<const std::size_t> subset, std::size_t branches) {
  if (subset.empty()) throw std::invalid_argument("branch subset must not be empty");
  std::vector<bool> seen(branches, false);
  for (auto i : subset) {
    if (i >= branches) {
      throw std::invalid_argument("branch index " + std::to_string(i) + " out of range for L = " +
                                  std::to_string(branches));
    }
    if (seen[i]) throw std::invalid_argument("duplicate branch index " + std::to_string(i));
    seen[i] = true;
  }
}

std::vector<SubSemantic> SafeNetwork::encode(const Tensor& image, Route route,
                                             std::span<const std::size_t> subset) const {
  const Shape expected{image.rank() == 4 ? image.dim(0) : 0, config_.input_channels, config_.height, config_.width};
  if (image.rank() != 4 || image.shape() != expected) {
    throw std::invalid_argument("encode expects images of shape [N," + std::to_string(config_.input_channels) + "," +
                                std::to_string(config_.height) + "," + std::to_string(config_.width) + "], got " +
                                shape_string(image.shape()));
  }
  std::vector<std::size_t> all(config_.branches());
  std::iota(all.begin(), all.end(), 0);
  if (subset.empty()) subset = all;
  validate_subset(subset, config_.branches());

  const Tensor features = trunk(route).forward(image);
  std::vector<std::size_t> offsets(config_.branches() + 1, 0);
  for (std::size_t b = 0; b < config_.branches(); ++b) offsets[b + 1] = offsets[b] + config_.split_channels(b);

  std::vector<SubSemantic> out;
  for (auto b : subset) {
    const Tensor block = slice_channels(features, offsets[b], config_.split_channels(b));
    out.push_back({b, power_normalize(group(groups::sfe_encoder(b)).forward(block))});
  }
  return out;
}

Tensor SafeNetwork::decode(std::span<const SubSemantic> received, Route route) const {
  std::vector<std::size_t> indices;
  for (const auto& s : received) indices.push_back(s.index);
  validate_subset(indices, config_.branches());

  const std::size_t n = received.front().payload.rank() == 4 ? received.front().payload.dim(0) : 0;
  const std::size_t lh = config_.height / 8, lw = config_.width / 8;
  std::vector<Tensor> recovered(config_.branches());
  for (const auto& s : received) {
    const Shape expected{n, config_.latent_channels[s.index], lh, lw};
    if (s.payload.shape() != expected) {
      throw std::invalid_argument("sub-semantic " + std::to_string(s.index) + " has shape " +
                                  shape_string(s.payload.shape()) + ", expected " + shape_string(expected));
    }
    recovered[s.index] = group(groups::sfr_decoder(s.index)).forward(s.payload);
  }
  for (std::size_t b = 0; b < config_.branches(); ++b) {
    if (!recovered[b].defined()) recovered[b] = Tensor::zeros({n, config_.split_channels(b), 2 * lh, 2 * lw});
  }
  const Tensor merged = concat_channels(std::span<const Tensor>(recovered));
  return combiner(route).forward(merged);
}

std::size_t SafeNetwork::conv_layers_on_path(std::size_t branch) const {
  if (branch >= config_.branches()) throw std::out_of_range("branch out of range");
  return group(groups::kSmEncoder).layers.size() + group(groups::sfe_encoder(branch)).layers.size() +
         group(groups::sfr_decoder(branch)).layers.size() + group(groups::kScDecoder).layers.size();
}

Tensor clamp_unit(const Tensor& x) {
  std::vector<float> v(x.data().begin(), x.data().end());
  for (auto& e : v) e = std::clamp(e, 0.0f, 1.0f);
  return Tensor(x.shape(), std::move(v));
}

}  // namespace safe
