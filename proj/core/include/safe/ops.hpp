#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "safe/tensor.hpp"

namespace safe {

/// Output extent of a strided, padded convolution along one axis.
/// Returns 0 when no kernel placement fits.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                               std::size_t padding);

/// Output extent of a transposed convolution along one axis. Negative results
/// are reported as 0.
std::size_t conv_transpose_output_extent(std::size_t input, std::size_t kernel, std::size_t stride,
                                         std::size_t padding, std::size_t output_padding);

/// input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,H',W'].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding);

/// input [N,Cin,H,W], weight [Cin,Cout,kh,kw], bias [Cout] -> [N,Cout,H',W'].
/// The forward map is the input-gradient of conv2d with the same geometry.
template <typename T>
BasicTensor<T> conv_transpose2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                                const BasicTensor<T>& bias, std::size_t stride,
                                std::size_t padding, std::size_t output_padding);

/// 2x2 window, stride 2. Ties route the gradient to the first element in
/// row-major window order.
template <typename T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& input);

/// x if x >= 0 else slope * x, with a single shared slope.
template <typename T>
BasicTensor<T> prelu(const BasicTensor<T>& input, const BasicTensor<T>& slope);

/// max(x, 0). The subgradient at 0 is taken as 1, which makes relu
/// coincide with prelu at slope 0 including its backward pass.
template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

/// Mean of squared differences over every element.
template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

/// Concatenates rank-4 tensors along the channel axis.
template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> parts);

/// Channels [begin, begin + count) of a rank-4 tensor.
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& input, std::size_t begin, std::size_t count);

/// input + offset, where offset is treated as a constant: the gradient with
/// respect to input is the identity.
template <typename T>
BasicTensor<T> add_constant(const BasicTensor<T>& input, std::span<const T> offset);

}  // namespace safe
