#include "safe/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <stdexcept>
#include <string>

namespace safe {

namespace {

// Row-major C = alpha * op(A) * op(B) + beta * C.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta, double* c,
          std::size_t ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

struct Geometry {
  std::size_t channels, height, width;
  std::size_t kh, kw, stride, padding;
  std::size_t out_h, out_w;

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

// Unfolds one image [C,H,W] into columns: row (c,ki,kj), column (oh,ow).
// The destination has leading dimension ld so that a whole batch can share
// one matrix.
template <typename T>
void im2col(const T* image, const Geometry& g, T* col, std::size_t ld) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * ld;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - pad;
          T* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - pad;
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width))
                          ? T{0}
                          : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back onto the image, accumulating.
template <typename T>
void col2im(const T* col, std::size_t ld, const Geometry& g, T* image) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * ld;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - pad;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = plane + static_cast<std::size_t>(ih) * g.width;
          const T* src = row + oh * g.out_w;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - pad;
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.width)) {
              dst[static_cast<std::size_t>(iw)] += src[ow];
            }
          }
        }
      }
    }
  }
}

// [N,C,P] <-> [C,N*P]
template <typename T>
std::vector<T> to_channel_major(std::span<const T> x, std::size_t n, std::size_t c, std::size_t p) {
  std::vector<T> out(x.size());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      std::copy_n(x.data() + (b * c + ch) * p, p, out.data() + ch * n * p + b * p);
  return out;
}

template <typename T>
void from_channel_major(const T* x, std::size_t n, std::size_t c, std::size_t p, T* out) {
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      std::copy_n(x + ch * n * p + b * p, p, out + (b * c + ch) * p);
}

void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw std::invalid_argument(std::string(what) + " must have rank " + std::to_string(rank) +
                                ", got " + shape_string(shape));
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  if (stride == 0 || input + 2 * padding < kernel) return 0;
  return (input + 2 * padding - kernel) / stride + 1;
}

std::size_t conv_transpose_output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                                         std::size_t padding, std::size_t output_padding) {
  if (input == 0) return 0;
  const auto grow = static_cast<long long>((input - 1) * stride + kernel + output_padding);
  const auto out = grow - 2 * static_cast<long long>(padding);
  return out > 0 ? static_cast<std::size_t>(out) : 0;
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding) {
  require_rank(input.shape(), 4, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  if (stride == 0) throw std::invalid_argument("conv2d stride must be positive");
  const auto& xs = input.shape();
  const auto& ws = weight.shape();
  if (xs[1] != ws[1]) {
    throw std::invalid_argument("conv2d channel mismatch: input " + shape_string(xs) + " vs weight " +
                                shape_string(ws));
  }
  if (bias.shape() != Shape{ws[0]}) {
    throw std::invalid_argument("conv2d bias " + shape_string(bias.shape()) + " does not match weight " +
                                shape_string(ws));
  }
  const std::size_t n = xs[0], cin = xs[1], h = xs[2], w = xs[3];
  const std::size_t cout = ws[0], kh = ws[2], kw = ws[3];
  const Geometry g{cin, h, w, kh, kw, stride, padding, conv_output_extent(h, kh, stride, padding),
                   conv_output_extent(w, kw, stride, padding)};
  if (g.out_h == 0 || g.out_w == 0) {
    throw std::invalid_argument("conv2d kernel " + shape_string(ws) + " does not fit input " +
                                shape_string(xs) + " with padding " + std::to_string(padding));
  }
  const std::size_t k = g.rows(), p = g.cols(), np = n * p;
  const std::size_t in_plane = cin * h * w;

  std::vector<T> col(k * np);
  for (std::size_t b = 0; b < n; ++b) im2col(input.data().data() + b * in_plane, g, col.data() + b * p, np);

  std::vector<T> out_cm(cout * np);
  gemm(false, false, cout, np, k, T{1}, weight.data().data(), k, col.data(), np, T{0}, out_cm.data(), np);
  const auto bdata = bias.data();
  for (std::size_t co = 0; co < cout; ++co) {
    T* row = out_cm.data() + co * np;
    for (std::size_t i = 0; i < np; ++i) row[i] += bdata[co];
  }
  std::vector<T> out(out_cm.size());
  from_channel_major(out_cm.data(), n, cout, p, out.data());

  return detail::make_result<T>(
      Shape{n, cout, g.out_h, g.out_w}, std::move(out), {input, weight, bias},
      [g, n, cout, in_plane](detail::Node<T>& self) {
        auto& x = *self.parents[0];
        auto& wt = *self.parents[1];
        auto& bs = *self.parents[2];
        const std::size_t k = g.rows(), p = g.cols(), np = n * p;
        const auto grad_cm = to_channel_major<T>(self.grad, n, cout, p);

        if (bs.requires_grad) {
          auto& db = bs.grad_buffer();
          for (std::size_t co = 0; co < cout; ++co) {
            T sum{0};
            const T* row = grad_cm.data() + co * np;
            for (std::size_t i = 0; i < np; ++i) sum += row[i];
            db[co] += sum;
          }
        }
        if (wt.requires_grad) {
          std::vector<T> col(k * np);
          for (std::size_t b = 0; b < n; ++b) im2col(x.data.data() + b * in_plane, g, col.data() + b * p, np);
          gemm(false, true, cout, k, np, T{1}, grad_cm.data(), np, col.data(), np, T{1},
               wt.grad_buffer().data(), k);
        }
        if (x.requires_grad) {
          std::vector<T> dcol(k * np);
          gemm(true, false, k, np, cout, T{1}, wt.data.data(), k, grad_cm.data(), np, T{0}, dcol.data(), np);
          auto& dx = x.grad_buffer();
          for (std::size_t b = 0; b < n; ++b) col2im(dcol.data() + b * p, np, g, dx.data() + b * in_plane);
        }
      });
}

template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias, std::size_t stride, std::size_t padding,
                                std::size_t output_padding) {
  require_rank(input.shape(), 4, "conv_transpose2d input");
  require_rank(weight.shape(), 4, "conv_transpose2d weight");
  if (stride == 0) throw std::invalid_argument("conv_transpose2d stride must be positive");
  if (output_padding >= stride) {
    throw std::invalid_argument("conv_transpose2d output_padding " + std::to_string(output_padding) +
                                " must be smaller than stride " + std::to_string(stride));
  }
  const auto& xs = input.shape();
  const auto& ws = weight.shape();
  if (xs[1] != ws[0]) {
    throw std::invalid_argument("conv_transpose2d channel mismatch: input " + shape_string(xs) +
                                " vs weight " + shape_string(ws));
  }
  if (bias.shape() != Shape{ws[1]}) {
    throw std::invalid_argument("conv_transpose2d bias " + shape_string(bias.shape()) +
                                " does not match weight " + shape_string(ws));
  }
  const std::size_t n = xs[0], cin = xs[1], h = xs[2], w = xs[3];
  const std::size_t cout = ws[1], kh = ws[2], kw = ws[3];
  const std::size_t out_h = conv_transpose_output_extent(h, kh, stride, padding, output_padding);
  const std::size_t out_w = conv_transpose_output_extent(w, kw, stride, padding, output_padding);
  if (out_h == 0 || out_w == 0) {
    throw std::invalid_argument("conv_transpose2d parameters yield a non-positive output size for input " +
                                shape_string(xs));
  }
  // Geometry of the adjoint convolution: it maps [Cout,out_h,out_w] to [Cin,h,w].
  const Geometry g{cout, out_h, out_w, kh, kw, stride, padding, h, w};
  const std::size_t k = g.rows(), p = h * w, np = n * p;
  const std::size_t out_plane = cout * out_h * out_w;

  const auto x_cm = to_channel_major<T>(input.data(), n, cin, p);
  std::vector<T> col(k * np);
  gemm(true, false, k, np, cin, T{1}, weight.data().data(), k, x_cm.data(), np, T{0}, col.data(), np);

  std::vector<T> out(n * out_plane, T{0});
  for (std::size_t b = 0; b < n; ++b) col2im(col.data() + b * p, np, g, out.data() + b * out_plane);
  const auto bdata = bias.data();
  const std::size_t plane = out_h * out_w;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      T* dst = out.data() + b * out_plane + co * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += bdata[co];
    }

  return detail::make_result<T>(
      Shape{n, cout, out_h, out_w}, std::move(out), {input, weight, bias},
      [g, n, cin, out_plane, plane](detail::Node<T>& self) {
        auto& x = *self.parents[0];
        auto& wt = *self.parents[1];
        auto& bs = *self.parents[2];
        const std::size_t k = g.rows(), p = g.cols(), np = n * p;
        const std::size_t cout = g.channels;

        if (bs.requires_grad) {
          auto& db = bs.grad_buffer();
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t co = 0; co < cout; ++co) {
              const T* src = self.grad.data() + b * out_plane + co * plane;
              T sum{0};
              for (std::size_t i = 0; i < plane; ++i) sum += src[i];
              db[co] += sum;
            }
        }
        if (!wt.requires_grad && !x.requires_grad) return;

        std::vector<T> dcol(k * np);
        for (std::size_t b = 0; b < n; ++b) im2col(self.grad.data() + b * out_plane, g, dcol.data() + b * p, np);

        if (wt.requires_grad) {
          const auto x_cm = to_channel_major<T>(x.data, n, cin, p);
          gemm(false, true, cin, k, np, T{1}, x_cm.data(), np, dcol.data(), np, T{1}, wt.grad_buffer().data(), k);
        }
        if (x.requires_grad) {
          std::vector<T> dx_cm(cin * np);
          gemm(false, false, cin, np, k, T{1}, wt.data.data(), k, dcol.data(), np, T{0}, dx_cm.data(), np);
          std::vector<T> dx(dx_cm.size());
          from_channel_major(dx_cm.data(), n, cin, p, dx.data());
          auto& acc = x.grad_buffer();
          for (std::size_t i = 0; i < dx.size(); ++i) acc[i] += dx[i];
        }
      });
}

template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& input) {
  require_rank(input.shape(), 4, "maxpool2d input");
  const auto& s = input.shape();
  const std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
  if (h % 2 != 0 || w % 2 != 0) {
    throw std::invalid_argument("maxpool2d requires even spatial dims, got " + shape_string(s));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<T> out(n * c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const auto x = input.data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, ++o) {
        const std::size_t top = base + 2 * i * w + 2 * j;
        const std::size_t window[4] = {top, top + 1, top + w, top + w + 1};
        std::size_t best = window[0];
        for (std::size_t q = 1; q < 4; ++q)
          if (x[window[q]] > x[best]) best = window[q];
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return detail::make_result<T>(Shape{n, c, oh, ow}, std::move(out), {input},
                                [argmax = std::move(argmax)](detail::Node<T>& self) {
                                  auto& dx = self.parents[0]->grad_buffer();
                                  for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += self.grad[i];
                                });
}

template <typename T>
BasicTensor<T> prelu(const BasicTensor<T>& input, const BasicTensor<T>& slope) {
  if (slope.numel() != 1) {
    throw std::invalid_argument("prelu slope must be a single value, got " + shape_string(slope.shape()));
  }
  const T a = slope.item();
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] >= T{0} ? x[i] : a * x[i];
  return detail::make_result<T>(input.shape(), std::move(out), {input, slope}, [](detail::Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& an = *self.parents[1];
    const T a = an.data[0];
    if (xn.requires_grad) {
      auto& dx = xn.grad_buffer();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += xn.data[i] >= T{0} ? self.grad[i] : a * self.grad[i];
    }
    if (an.requires_grad) {
      T sum{0};
      for (std::size_t i = 0; i < xn.data.size(); ++i)
        if (xn.data[i] < T{0}) sum += self.grad[i] * xn.data[i];
      an.grad_buffer()[0] += sum;
    }
  });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] >= T{0} ? x[i] : T{0};
  return detail::make_result<T>(input.shape(), std::move(out), {input}, [](detail::Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& dx = xn.grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (xn.data[i] >= T{0}) dx[i] += self.grad[i];
  });
}

template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw std::invalid_argument("mse_loss shape mismatch: " + shape_string(pred.shape()) + " vs " +
                                shape_string(target.shape()));
  }
  const auto p = pred.data();
  const auto t = target.data();
  // Accumulate in double so float training losses are stable across batch sizes.
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    sum += d * d;
  }
  const double m = static_cast<double>(p.size());
  return detail::make_result<T>(Shape{1}, {static_cast<T>(sum / m)}, {pred, target},
                                [](detail::Node<T>& self) {
                                  auto& pn = *self.parents[0];
                                  auto& tn = *self.parents[1];
                                  const T scale = T{2} * self.grad[0] / static_cast<T>(pn.data.size());
                                  if (pn.requires_grad) {
                                    auto& dp = pn.grad_buffer();
                                    for (std::size_t i = 0; i < dp.size(); ++i)
                                      dp[i] += scale * (pn.data[i] - tn.data[i]);
                                  }
                                  if (tn.requires_grad) {
                                    auto& dt = tn.grad_buffer();
                                    for (std::size_t i = 0; i < dt.size(); ++i)
                                      dt[i] -= scale * (pn.data[i] - tn.data[i]);
                                  }
                                });
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels needs at least one tensor");
  require_rank(parts[0].shape(), 4, "concat_channels part");
  const std::size_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  std::vector<std::size_t> channels;
  std::size_t total = 0;
  for (const auto& part : parts) {
    require_rank(part.shape(), 4, "concat_channels part");
    if (part.dim(0) != n || part.dim(2) != h || part.dim(3) != w) {
      throw std::invalid_argument("concat_channels shape mismatch: " + shape_string(parts[0].shape()) +
                                  " vs " + shape_string(part.shape()));
    }
    channels.push_back(part.dim(1));
    total += part.dim(1);
  }
  const std::size_t plane = h * w;
  std::vector<T> out(n * total * plane);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(src.data() + b * channels[k] * plane, channels[k] * plane,
                  out.data() + (b * total + offset) * plane);
    offset += channels[k];
  }
  std::vector<BasicTensor<T>> parents(parts.begin(), parts.end());
  return detail::make_result<T>(Shape{n, total, h, w}, std::move(out), std::move(parents),
                                [channels, n, total, plane](detail::Node<T>& self) {
                                  std::size_t offset = 0;
                                  for (std::size_t k = 0; k < channels.size(); ++k) {
                                    auto& part = *self.parents[k];
                                    if (part.requires_grad) {
                                      auto& dg = part.grad_buffer();
                                      for (std::size_t b = 0; b < n; ++b) {
                                        const T* src = self.grad.data() + (b * total + offset) * plane;
                                        T* dst = dg.data() + b * channels[k] * plane;
                                        for (std::size_t i = 0; i < channels[k] * plane; ++i) dst[i] += src[i];
                                      }
                                    }
                                    offset += channels[k];
                                  }
                                });
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::size_t begin, std::size_t count) {
  require_rank(input.shape(), 4, "slice_channels input");
  const auto& s = input.shape();
  if (count == 0 || begin + count > s[1]) {
    throw std::invalid_argument("slice_channels range [" + std::to_string(begin) + "," +
                                std::to_string(begin + count) + ") outside " + shape_string(s));
  }
  const std::size_t n = s[0], c = s[1], plane = s[2] * s[3];
  std::vector<T> out(n * count * plane);
  const auto x = input.data();
  for (std::size_t b = 0; b < n; ++b)
    std::copy_n(x.data() + (b * c + begin) * plane, count * plane, out.data() + b * count * plane);
  return detail::make_result<T>(Shape{n, count, s[2], s[3]}, std::move(out), {input},
                                [n, c, begin, count, plane](detail::Node<T>& self) {
                                  auto& dx = self.parents[0]->grad_buffer();
                                  for (std::size_t b = 0; b < n; ++b) {
                                    const T* src = self.grad.data() + b * count * plane;
                                    T* dst = dx.data() + (b * c + begin) * plane;
                                    for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
                                  }
                                });
}

template <typename T>
BasicTensor<T> add_constant(const BasicTensor<T>& input, std::span<const T> offset) {
  if (offset.size() != input.numel()) {
    throw std::invalid_argument("add_constant offset has " + std::to_string(offset.size()) +
                                " values for tensor " + shape_string(input.shape()));
  }
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + offset[i];
  return detail::make_result<T>(input.shape(), std::move(out), {input}, [](detail::Node<T>& self) {
    auto& dx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
  });
}

#define SAFE_INSTANTIATE_OPS(T)                                                                          \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,    \
                                 std::size_t, std::size_t);                                              \
  template BasicTensor<T> conv_transpose2d(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                           const BasicTensor<T>&, std::size_t, std::size_t, std::size_t); \
  template BasicTensor<T> maxpool2d(const BasicTensor<T>&);                                              \
  template BasicTensor<T> prelu(const BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> mse_loss(const BasicTensor<T>&, const BasicTensor<T>&);                        \
  template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>>);                              \
  template BasicTensor<T> slice_channels(const BasicTensor<T>&, std::size_t, std::size_t);               \
  template BasicTensor<T> add_constant(const BasicTensor<T>&, std::span<const T>);

SAFE_INSTANTIATE_OPS(float)
SAFE_INSTANTIATE_OPS(double)

#undef SAFE_INSTANTIATE_OPS

}  // namespace safe
