#include "safe/pipeline.hpp"

namespace safe {

PipelineResult forward_pipeline(const SafeNetwork& net, const Tensor& image, const ChannelSpec& channel,
                                std::span<const std::size_t> subset, Rng& rng, std::optional<Route> route) {
  validate_subset(subset, net.config().branches());
  const Route path = route.value_or(net.route_for(subset));
  const std::uint64_t base = rng.next_u64();

  PipelineResult result;
  result.transmitted = net.encode(image, path, subset);
  for (const auto& sent : result.transmitted) {
    Rng branch_rng(Rng::derive(base, {sent.index}));
    auto t = transmit(sent.payload, channel, branch_rng);
    result.received.push_back({sent.index, std::move(t.received)});
    result.realizations.push_back(std::move(t.realization));
  }
  result.reconstruction = net.decode(result.received, path);
  return result;
}

}  // namespace safe
