#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "safe/network.hpp"

namespace safe {

/// Binary network container. All integers and floats are little-endian.
///
///   char[8]  magic "SAFECKPT"
///   u32      format version (1)
///   u32      input_channels, height, width, base_width, common_depth, branch_depth
///   u32      L, then L x u32 latent channel counts d_i
///   u32      strategy, trained_levels
///   u64      split_seed
///   u32      parameter count P
///   P x {    u32 name length, name bytes (no terminator),
///            u8 trainable flag,
///            u32 rank, rank x u32 dims,
///            f32 x prod(dims) values }
///
/// Parameters appear in network order; optional "_2" groups are recreated
/// from their base group's layout in the order they appear.
std::vector<std::uint8_t> serialize_checkpoint(const SafeNetwork& net);
SafeNetwork deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const SafeNetwork& net, const std::filesystem::path& path);
SafeNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace safe
