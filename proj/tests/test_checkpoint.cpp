#include <gtest/gtest.h>

#include <cstring>

#include "safe/checkpoint.hpp"
#include "test_util.hpp"

using namespace safe;

namespace {

SafeNetwork sample_net(bool secondary) {
  Rng rng(3);
  auto net = SafeNetwork::build(test::tiny_config(), rng);
  net.info() = {2, 2, 77};
  if (secondary) {
    net.add_group_clone("sm_encoder", "sm_encoder_2");
    net.add_group_clone("sc_decoder", "sc_decoder_2");
    net.find_parameter("sc_decoder_2.deconv1.weight")->tensor.mutable_data()[0] = 0.125f;
  }
  net.find_parameter("sfe_encoder.0.conv1.weight")->set_trainable(false);
  return net;
}

}  // namespace

TEST(Checkpoint, RoundTripIsByteExact) {
  for (bool secondary : {false, true}) {
    const auto net = sample_net(secondary);
    const auto bytes = serialize_checkpoint(net);
    const auto back = deserialize_checkpoint(bytes);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
    EXPECT_EQ(back.config(), net.config());
    EXPECT_EQ(back.info().strategy, 2u);
    EXPECT_EQ(back.info().trained_levels, 2u);
    EXPECT_EQ(back.info().split_seed, 77u);
    EXPECT_EQ(back.has_secondary_path(), secondary);
    const auto a = net.parameters();
    const auto b = back.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i]->name, b[i]->name);
      EXPECT_EQ(a[i]->trainable, b[i]->trainable);
      EXPECT_TRUE(test::bit_equal(a[i]->tensor.data(), b[i]->tensor.data()));
    }
  }
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = serialize_checkpoint(sample_net(false));
  ASSERT_GT(bytes.size(), 12u);
  EXPECT_EQ(std::memcmp(bytes.data(), "SAFECKPT", 8), 0);
  EXPECT_EQ(bytes[8], 1);  // version, little-endian
  EXPECT_EQ(bytes[9] | bytes[10] | bytes[11], 0);
}

TEST(Checkpoint, RejectsCorruptInput) {
  const auto good = serialize_checkpoint(sample_net(false));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_ANY_THROW(deserialize_checkpoint(bad_magic));
  auto truncated = good;
  truncated.resize(good.size() - 3);
  EXPECT_ANY_THROW(deserialize_checkpoint(truncated));
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_ANY_THROW(deserialize_checkpoint(trailing));
  auto version = good;
  version[8] = 9;
  EXPECT_ANY_THROW(deserialize_checkpoint(version));
  EXPECT_ANY_THROW(deserialize_checkpoint({}));
}

TEST(Checkpoint, RejectsUnknownParameterName) {
  auto bytes = serialize_checkpoint(sample_net(false));
  const std::string needle = "sm_encoder.conv1.weight";
  auto it = std::search(bytes.begin(), bytes.end(), needle.begin(), needle.end());
  ASSERT_NE(it, bytes.end());
  *(it + 3) = 'X';
  try {
    deserialize_checkpoint(bytes);
    ADD_FAILURE();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("sm_Xncoder"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, FileRoundTrip) {
  test::TempDir dir("ckpt");
  const auto net = sample_net(true);
  save_checkpoint(net, dir.path() / "n.ckpt");
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(dir.path() / "n.ckpt")), serialize_checkpoint(net));
  EXPECT_ANY_THROW(load_checkpoint(dir.path() / "missing.ckpt"));
}
