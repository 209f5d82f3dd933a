#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "safe/network.hpp"
#include "test_util.hpp"

using namespace safe;

namespace {

SafeNetwork fresh(const SafeConfig& c, std::uint64_t seed = 1) {
  Rng rng(seed);
  return SafeNetwork::build(c, rng);
}

}  // namespace

TEST(Network, PaperConfigHasFourteenConvLayersPerPath) {
  const auto net = fresh(paper_config());
  for (std::size_t b = 0; b < 2; ++b) EXPECT_EQ(net.conv_layers_on_path(b), 14u);
}

TEST(Network, PaperConfigPayloadShape) {
  const auto net = fresh(paper_config());
  Rng rng(2);
  const auto x = test::random_tensor({1, 3, 224, 224}, rng, 0, 1);
  NoGradGuard guard;
  const auto subs = net.encode(x);
  ASSERT_EQ(subs.size(), 2u);
  for (const auto& s : subs) EXPECT_EQ(s.payload.shape(), (Shape{1, 8, 28, 28}));
}

TEST(Network, DeskPayloadShapeAndRoundTripShape) {
  SafeConfig c;
  const auto net = fresh(c);
  Rng rng(3);
  const auto x = test::random_tensor({3, 3, 32, 32}, rng, 0, 1);
  NoGradGuard guard;
  const auto subs = net.encode(x);
  for (const auto& s : subs) EXPECT_EQ(s.payload.shape(), (Shape{3, 8, 4, 4}));
  EXPECT_EQ(net.decode(subs).shape(), x.shape());
}

TEST(Network, PayloadShapeFollowsConfigForRandomConfigs) {
  Rng rng(4);
  for (int trial = 0; trial < 8; ++trial) {
    SafeConfig c;
    const std::size_t l = 1 + rng.below(3);
    c.latent_channels.assign(l, 1 + rng.below(3));
    c.base_width = 2 * l * (1 + rng.below(2));
    c.height = 8 * (1 + rng.below(3));
    c.width = 8 * (1 + rng.below(3));
    c.common_depth = 3 + rng.below(2);
    c.branch_depth = 2 + rng.below(2);
    c.latent_channels[0] = c.latent_channels.back();
    ASSERT_NO_THROW(c.validate()) << trial;
    const auto net = fresh(c, trial);
    const auto x = test::random_tensor({2, 3, c.height, c.width}, rng, 0, 1);
    NoGradGuard guard;
    const auto subs = net.encode(x);
    for (const auto& s : subs)
      EXPECT_EQ(s.payload.shape(), (Shape{2, c.latent_channels[s.index], c.height / 8, c.width / 8}));
    EXPECT_EQ(net.decode(subs).shape(), x.shape());
    for (std::size_t b = 0; b < l; ++b) EXPECT_EQ(net.conv_layers_on_path(b), 2 * c.common_depth + 2 * c.branch_depth);
  }
}

TEST(Network, BandwidthRatios) {
  for (std::size_t hw : {224u, 32u}) {
    SafeConfig c;
    c.height = c.width = hw;
    EXPECT_EQ(bandwidth_ratio(c, 0), Rational(1, 24));
    EXPECT_EQ(bandwidth_ratio(c, 1), Rational(1, 24));
    EXPECT_EQ(total_bandwidth_ratio(c), Rational(1, 12));
  }
  SafeConfig c;
  c.latent_channels = {8, 16, 4};
  c.base_width = 14;
  EXPECT_EQ(total_bandwidth_ratio(c), bandwidth_ratio(c, 0) + bandwidth_ratio(c, 1) + bandwidth_ratio(c, 2));
}

TEST(Network, ConfigValidationNamesConstraint) {
  auto expect_fail = [](SafeConfig c, const std::string& needle) {
    try {
      c.validate();
      ADD_FAILURE() << "no error for " << needle;
    } catch (const std::invalid_argument& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  SafeConfig c;
  c.height = 30;
  expect_fail(c, "multiples of 8");
  c = SafeConfig{};
  c.latent_channels.clear();
  expect_fail(c, "L >= 1");
  c = SafeConfig{};
  c.common_depth = 2;
  expect_fail(c, "common_depth");
  c = SafeConfig{};
  c.branch_depth = 1;
  expect_fail(c, "branch_depth");
  c = SafeConfig{};
  c.latent_channels = {8, 7};
  expect_fail(c, "split width");
  Rng rng(1);
  c = SafeConfig{};
  c.width = 12;
  EXPECT_THROW(SafeNetwork::build(c, rng), std::invalid_argument);
}

TEST(Network, SingleBranchIsPlainAutoencoder) {
  SafeConfig c;
  c.latent_channels = {8};
  const auto net = fresh(c);
  Rng rng(5);
  const auto x = test::random_tensor({1, 3, 32, 32}, rng, 0, 1);
  NoGradGuard guard;
  const auto subs = net.encode(x);
  ASSERT_EQ(subs.size(), 1u);
  EXPECT_EQ(net.decode(subs).shape(), x.shape());
}

TEST(Network, PayloadsHaveUnitPowerPerSample) {
  const auto net = fresh(test::tiny_config());
  Rng rng(6);
  const auto x = test::random_tensor({4, 3, 16, 16}, rng, 0, 1);
  NoGradGuard guard;
  for (const auto& s : net.encode(x)) {
    const auto per = s.payload.numel() / 4;
    for (std::size_t n = 0; n < 4; ++n) {
      double p = 0;
      for (std::size_t i = 0; i < per; ++i) p += std::pow(s.payload.data()[n * per + i], 2);
      EXPECT_NEAR(p / static_cast<double>(per), 1.0, 1e-5);
    }
  }
}

TEST(Network, ZeroFillMatchesZeroRecoveredBlock) {
  // A fresh network has zero biases, so a zero payload recovers to zero.
  const auto net = fresh(test::tiny_config());
  Rng rng(7);
  const auto x = test::random_tensor({2, 3, 16, 16}, rng, 0, 1);
  NoGradGuard guard;
  auto subs = net.encode(x);
  const std::vector<SubSemantic> only0{subs[0]};
  const std::vector<SubSemantic> zeroed{subs[0], {1, Tensor::zeros(subs[1].payload.shape())}};
  EXPECT_TRUE(test::bit_equal(net.decode(only0).data(), net.decode(zeroed).data()));
}

TEST(Network, SubsetSelectsBranches) {
  const auto net = fresh(test::tiny_config());
  Rng rng(8);
  const auto x = test::random_tensor({1, 3, 16, 16}, rng, 0, 1);
  NoGradGuard guard;
  const std::vector<std::size_t> one{1};
  const auto subs = net.encode(x, Route::Primary, one);
  ASSERT_EQ(subs.size(), 1u);
  EXPECT_EQ(subs[0].index, 1u);
  const std::vector<std::size_t> bad{0, 0};
  EXPECT_THROW(net.encode(x, Route::Primary, bad), std::invalid_argument);
  const std::vector<std::size_t> out_of_range{2};
  EXPECT_THROW(net.encode(x, Route::Primary, out_of_range), std::invalid_argument);
  EXPECT_THROW(net.encode(Tensor::zeros({1, 3, 8, 8})), std::invalid_argument);
}

TEST(Network, GroupsAndParameterNames) {
  auto net = fresh(test::tiny_config());
  const std::vector<std::string> expect{"sm_encoder", "sfe_encoder.0", "sfe_encoder.1", "sfr_decoder.0",
                                        "sfr_decoder.1", "sc_decoder"};
  auto names = net.group_names();
  EXPECT_EQ(std::set<std::string>(names.begin(), names.end()), std::set<std::string>(expect.begin(), expect.end()));
  std::set<std::string> seen;
  for (const auto* p : net.parameters()) {
    EXPECT_TRUE(seen.insert(p->name).second) << p->name;
    EXPECT_EQ(p->name.rfind(p->group + ".", 0), 0u) << p->name;
  }
  EXPECT_NE(net.find_parameter("sm_encoder.conv1.weight"), nullptr);
  EXPECT_EQ(net.find_parameter("nope"), nullptr);
  EXPECT_THROW(net.group("nope"), std::invalid_argument);
}

TEST(Network, RouteFollowsSecondaryGroups) {
  auto net = fresh(test::tiny_config());
  const std::vector<std::size_t> s0{0}, s01{0, 1}, s1{1};
  EXPECT_FALSE(net.has_secondary_path());
  EXPECT_EQ(net.route_for(s01), Route::Primary);
  net.add_group_clone("sc_decoder", "sc_decoder_2");
  EXPECT_TRUE(net.has_secondary_path());
  EXPECT_EQ(net.route_for(s0), Route::Primary);
  EXPECT_EQ(net.route_for(s01), Route::Secondary);
  EXPECT_EQ(net.route_for(s1), Route::Secondary);
  EXPECT_THROW(net.add_group_clone("sc_decoder", "sc_decoder_2"), std::invalid_argument);
}

TEST(Network, CloneIsDeep) {
  auto net = fresh(test::tiny_config());
  auto copy = net.clone();
  copy.find_parameter("sc_decoder.deconv1.weight")->tensor.mutable_data()[0] += 1.0f;
  EXPECT_NE(copy.find_parameter("sc_decoder.deconv1.weight")->tensor.data()[0],
            net.find_parameter("sc_decoder.deconv1.weight")->tensor.data()[0]);
}

TEST(Network, KaimingInitialization) {
  const auto net = fresh(SafeConfig{});
  const auto& p = net.group("sm_encoder").layers[1].weight;
  const auto d = p.tensor.data();
  double s = 0, s2 = 0;
  for (float v : d) {
    s += v;
    s2 += double(v) * v;
  }
  const double n = static_cast<double>(d.size());
  const double var = s2 / n - (s / n) * (s / n);
  EXPECT_NEAR(std::sqrt(var), std::sqrt(2.0 / (16 * 9)), 0.1 * std::sqrt(2.0 / (16 * 9)));
  for (float v : net.group("sm_encoder").layers[1].bias.tensor.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_FLOAT_EQ(net.group("sm_encoder").layers[0].slope->tensor.item(), 0.25f);
}
