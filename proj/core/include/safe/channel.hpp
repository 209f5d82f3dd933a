#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "safe/rng.hpp"
#include "safe/tensor.hpp"

namespace safe {

/// Noiseless is the infinite-SNR limit: the channel is the identity.
enum class ChannelKind { Awgn, Rayleigh, Noiseless };

std::string to_string(ChannelKind kind);
ChannelKind parse_channel_kind(std::string_view text);

struct ChannelSpec {
  ChannelKind kind = ChannelKind::Awgn;
  double snr_db = 10.0;
};

/// What one transmission drew: one fading gain per block (per sample of the
/// batch), and the seed of the noise stream.
struct ChannelRealization {
  std::vector<double> fade;
  std::uint64_t noise_seed = 0;
};

struct Transmission {
  Tensor received;
  ChannelRealization realization;
};

/// Scales every sample (leading axis) to unit average power:
/// x * sqrt(M / sum(x^2)) with M the per-sample element count.
template <typename T>
BasicTensor<T> power_normalize(const BasicTensor<T>& x);

/// Noise standard deviation for unit signal power: sqrt(10^(-snr_db/10)).
double noise_std_for_snr(double snr_db);

/// y = x + n with n ~ N(0, sigma^2). The noise is a constant in the backward
/// pass, so dy/dx is the identity.
Transmission transmit_awgn(const Tensor& x, const ChannelSpec& spec, Rng& rng);

/// Block Rayleigh fading with perfect-CSI zero-forcing: per sample a gain
/// h = sqrt(a^2 + b^2) / sqrt(2) is drawn and the equalized output is
/// y = x + n / h. Same gradient contract as AWGN.
Transmission transmit_rayleigh(const Tensor& x, const ChannelSpec& spec, Rng& rng);

/// Rayleigh transmission with caller-chosen gains, one per sample.
Transmission transmit_with_fade(const Tensor& x, double noise_std, std::vector<double> fade, Rng& rng);

/// Dispatches on spec.kind.
Transmission transmit(const Tensor& x, const ChannelSpec& spec, Rng& rng);

}  // namespace safe
