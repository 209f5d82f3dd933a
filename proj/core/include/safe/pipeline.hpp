#pragma once

#include <optional>
#include <span>
#include <vector>

#include "safe/channel.hpp"
#include "safe/network.hpp"

namespace safe {

struct PipelineResult {
  Tensor reconstruction;                  // unclamped, [N,3,H,W]
  std::vector<SubSemantic> transmitted;   // unit-power payloads, subset order
  std::vector<SubSemantic> received;      // after the channel
  std::vector<ChannelRealization> realizations;
};

/// Encode the subset, send each payload through its own channel
/// realization, decode with zero-fill for the dropped branches.
///
/// One value is drawn from `rng`; branch b then uses the sub-stream
/// derive(value, {b}), so a branch's noise does not depend on which other
/// branches are in the subset. The route defaults to net.route_for(subset).
PipelineResult forward_pipeline(const SafeNetwork& net, const Tensor& image, const ChannelSpec& channel,
                                std::span<const std::size_t> subset, Rng& rng,
                                std::optional<Route> route = std::nullopt);

}  // namespace safe
