#include <gtest/gtest.h>

#include "safe/ops.hpp"
#include "safe/pipeline.hpp"
#include "test_util.hpp"

using namespace safe;

namespace {

SafeNetwork fresh() {
  Rng rng(1);
  return SafeNetwork::build(test::tiny_config(), rng);
}

}  // namespace

TEST(Pipeline, NoiselessEqualsDecodeOfEncode) {
  const auto net = fresh();
  Rng data(2);
  const auto x = test::random_tensor({2, 3, 16, 16}, data, 0, 1);
  NoGradGuard guard;
  Rng rng(3);
  const std::vector<std::size_t> subset{0, 1};
  const auto r = forward_pipeline(net, x, {ChannelKind::Noiseless, 0.0}, subset, rng);
  EXPECT_TRUE(test::bit_equal(r.reconstruction.data(), net.decode(net.encode(x)).data()));
  ASSERT_EQ(r.transmitted.size(), 2u);
  ASSERT_EQ(r.realizations.size(), 2u);
}

TEST(Pipeline, BranchNoiseDoesNotDependOnSubset) {
  const auto net = fresh();
  Rng data(4);
  const auto x = test::random_tensor({2, 3, 16, 16}, data, 0, 1);
  NoGradGuard guard;
  const std::vector<std::size_t> s0{0}, s01{0, 1};
  Rng a(5), b(5);
  const auto r0 = forward_pipeline(net, x, {ChannelKind::Awgn, 5.0}, s0, a);
  const auto r01 = forward_pipeline(net, x, {ChannelKind::Awgn, 5.0}, s01, b);
  EXPECT_TRUE(test::bit_equal(r0.received[0].payload.data(), r01.received[0].payload.data()));
  EXPECT_FALSE(test::bit_equal(r01.received[0].payload.data(), r01.transmitted[0].payload.data()));
}

TEST(Pipeline, DeterministicForSeed) {
  const auto net = fresh();
  Rng data(6);
  const auto x = test::random_tensor({1, 3, 16, 16}, data, 0, 1);
  NoGradGuard guard;
  const std::vector<std::size_t> subset{0, 1};
  Rng a(7), b(7), c(8);
  const auto ra = forward_pipeline(net, x, {ChannelKind::Rayleigh, 5.0}, subset, a);
  const auto rb = forward_pipeline(net, x, {ChannelKind::Rayleigh, 5.0}, subset, b);
  const auto rc = forward_pipeline(net, x, {ChannelKind::Rayleigh, 5.0}, subset, c);
  EXPECT_TRUE(test::bit_equal(ra.reconstruction.data(), rb.reconstruction.data()));
  EXPECT_FALSE(test::bit_equal(ra.reconstruction.data(), rc.reconstruction.data()));
}

TEST(Pipeline, GradientsReachEncoder) {
  auto net = fresh();
  Rng data(9);
  const auto x = test::random_tensor({2, 3, 16, 16}, data, 0, 1);
  Rng rng(10);
  const std::vector<std::size_t> subset{0, 1};
  auto r = forward_pipeline(net, x, {ChannelKind::Awgn, 10.0}, subset, rng);
  backward(mse_loss(r.reconstruction, x));
  EXPECT_TRUE(net.find_parameter("sm_encoder.conv1.weight")->tensor.has_grad());
}
