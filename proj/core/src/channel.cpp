#include "safe/channel.hpp"

#include <cmath>
#include <stdexcept>

#include "safe/ops.hpp"

namespace safe {

std::string to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::Awgn:
      return "awgn";
    case ChannelKind::Rayleigh:
      return "rayleigh";
    case ChannelKind::Noiseless:
      return "none";
  }
  return "unknown";
}

ChannelKind parse_channel_kind(std::string_view text) {
  if (text == "awgn") return ChannelKind::Awgn;
  if (text == "rayleigh") return ChannelKind::Rayleigh;
  if (text == "none") return ChannelKind::Noiseless;
  throw std::invalid_argument("unknown channel '" + std::string(text) + "' (expected awgn, rayleigh or none)");
}

template <typename T>
BasicTensor<T> power_normalize(const BasicTensor<T>& x) {
  if (x.rank() == 0 || x.numel() == 0) throw std::invalid_argument("power_normalize on empty tensor");
  const std::size_t n = x.dim(0);
  const std::size_t m = x.numel() / n;
  const auto data = x.data();
  std::vector<T> out(data.size());
  std::vector<double> scale(n), energy(n);
  for (std::size_t b = 0; b < n; ++b) {
    double e = 0.0;
    for (std::size_t i = 0; i < m; ++i) e += static_cast<double>(data[b * m + i]) * data[b * m + i];
    if (e == 0.0) {
      throw std::invalid_argument("power_normalize: sample " + std::to_string(b) +
                                  " is all zero, scale is undefined");
    }
    energy[b] = e;
    scale[b] = std::sqrt(static_cast<double>(m) / e);
    for (std::size_t i = 0; i < m; ++i) out[b * m + i] = static_cast<T>(data[b * m + i] * scale[b]);
  }
  return detail::make_result<T>(x.shape(), std::move(out), {x},
                                [n, m, scale, energy](detail::Node<T>& self) {
                                  auto& xn = *self.parents[0];
                                  auto& dx = xn.grad_buffer();
                                  // d(s x)/dx = s (I - x x^T / E)
                                  for (std::size_t b = 0; b < n; ++b) {
                                    double dot = 0.0;
                                    for (std::size_t i = 0; i < m; ++i)
                                      dot += static_cast<double>(self.grad[b * m + i]) * xn.data[b * m + i];
                                    const double coeff = dot / energy[b];
                                    for (std::size_t i = 0; i < m; ++i) {
                                      const std::size_t j = b * m + i;
                                      dx[j] += static_cast<T>(scale[b] * (self.grad[j] - coeff * xn.data[j]));
                                    }
                                  }
                                });
}

template Tensor power_normalize(const Tensor&);
template Tensor64 power_normalize(const Tensor64&);

double noise_std_for_snr(double snr_db) {
  if (!std::isfinite(snr_db)) throw std::invalid_argument("SNR must be finite");
  return std::sqrt(std::pow(10.0, -snr_db / 10.0));
}

Transmission transmit_with_fade(const Tensor& x, double noise_std, std::vector<double> fade, Rng& rng) {
  if (x.rank() == 0) throw std::invalid_argument("transmit on empty tensor");
  const std::size_t n = x.dim(0);
  if (fade.size() != n) throw std::invalid_argument("one fading gain per sample is required");
  for (double h : fade)
    if (!(h > 0.0)) throw std::invalid_argument("fading gain must be positive");
  const std::size_t m = x.numel() / n;

  Transmission t;
  t.realization.noise_seed = rng.next_u64();
  t.realization.fade = std::move(fade);
  Rng noise(t.realization.noise_seed);
  std::vector<float> offset(x.numel());
  for (std::size_t b = 0; b < n; ++b) {
    const double sigma = noise_std / t.realization.fade[b];
    for (std::size_t i = 0; i < m; ++i) offset[b * m + i] = static_cast<float>(sigma * noise.normal());
  }
  t.received = add_constant(x, std::span<const float>(offset));
  return t;
}

Transmission transmit_awgn(const Tensor& x, const ChannelSpec& spec, Rng& rng) {
  return transmit_with_fade(x, noise_std_for_snr(spec.snr_db), std::vector<double>(x.dim(0), 1.0), rng);
}

Transmission transmit_rayleigh(const Tensor& x, const ChannelSpec& spec, Rng& rng) {
  const double sigma = noise_std_for_snr(spec.snr_db);
  std::vector<double> fade(x.dim(0));
  for (auto& h : fade) {
    do {
      const double a = rng.normal();
      const double b = rng.normal();
      h = std::sqrt(a * a + b * b) / std::sqrt(2.0);
    } while (!(h > 0.0));
  }
  return transmit_with_fade(x, sigma, std::move(fade), rng);
}

Transmission transmit(const Tensor& x, const ChannelSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case ChannelKind::Awgn:
      return transmit_awgn(x, spec, rng);
    case ChannelKind::Rayleigh:
      return transmit_rayleigh(x, spec, rng);
    case ChannelKind::Noiseless:
      break;
  }
  Transmission t;
  t.received = x;
  t.realization.fade.assign(x.dim(0), 1.0);
  return t;
}

}  // namespace safe
