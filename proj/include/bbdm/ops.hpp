#pragma once

#include "bbdm/autograd.hpp"
#include "bbdm/difference_kernels.hpp"

// Differentiable operations over BasicVar. Image tensors are NCHW.
namespace bbdm {

template <typename T> BasicVar<T> add(const BasicVar<T>& a, const BasicVar<T>& b);
template <typename T> BasicVar<T> sub(const BasicVar<T>& a, const BasicVar<T>& b);
template <typename T> BasicVar<T> mul(const BasicVar<T>& a, const BasicVar<T>& b);
template <typename T> BasicVar<T> scale(const BasicVar<T>& x, T factor);

template <typename T> BasicVar<T> sum(const BasicVar<T>& x);
template <typename T> BasicVar<T> mean(const BasicVar<T>& x);

/// mean(|prediction - target|) over every element.
template <typename T> BasicVar<T> l1_loss(const BasicVar<T>& prediction, const BasicVar<T>& target);

/// [M, K] x [K, N] -> [M, N]
template <typename T> BasicVar<T> matmul(const BasicVar<T>& a, const BasicVar<T>& b);

/// x [N, in], weight [out, in], bias [out] (bias may be undefined) -> [N, out]
template <typename T>
BasicVar<T> linear(const BasicVar<T>& x, const BasicVar<T>& weight, const BasicVar<T>& bias);

/// Stride-1 convolution (cross-correlation). x [N, C, H, W], weight [O, C, k, k]
/// with odd k, bias [O] or undefined. Output [N, O, H + 2p - k + 1, W + 2p - k + 1].
template <typename T>
BasicVar<T> conv2d(const BasicVar<T>& x, const BasicVar<T>& weight, const BasicVar<T>& bias,
                   int padding);

/// Pixel-difference convolution: each 3x3 weight tap multiplies an input
/// difference chosen by `kind`. Zero padding is applied before differencing.
/// bias [O] or undefined.
template <typename T>
BasicVar<T> difference_conv2d(const BasicVar<T>& x, const BasicVar<T>& weight, const BasicVar<T>& bias,
                              DifferenceKind kind, int padding);

/// Differentiable weight-space reparameterization: the plain kernel equivalent
/// to a difference kernel.
template <typename T> BasicVar<T> kernel_transform(const BasicVar<T>& weight, DifferenceKind kind);

template <typename T>
BasicVar<T> group_norm(const BasicVar<T>& x, int groups, const BasicVar<T>& gamma,
                       const BasicVar<T>& beta, T eps = T(1e-5));

/// x * sigmoid(x)
template <typename T> BasicVar<T> silu(const BasicVar<T>& x);

template <typename T> BasicVar<T> upsample_nearest2x(const BasicVar<T>& x);
/// Keeps the top-left sample of every 2x2 cell; H and W must be even.
template <typename T> BasicVar<T> downsample_nearest2x(const BasicVar<T>& x);

template <typename T> BasicVar<T> concat_channels(const BasicVar<T>& a, const BasicVar<T>& b);
/// Channels [begin, end) of an NCHW tensor.
template <typename T> BasicVar<T> slice_channels(const BasicVar<T>& x, std::int64_t begin, std::int64_t end);

/// x [N, C, H, W] + bias [N, C] broadcast over the spatial extent.
template <typename T> BasicVar<T> add_channel_bias(const BasicVar<T>& x, const BasicVar<T>& bias);

template <typename T> BasicVar<T> operator+(const BasicVar<T>& a, const BasicVar<T>& b) { return add(a, b); }
template <typename T> BasicVar<T> operator-(const BasicVar<T>& a, const BasicVar<T>& b) { return sub(a, b); }
template <typename T> BasicVar<T> operator*(const BasicVar<T>& a, const BasicVar<T>& b) { return mul(a, b); }

}  // namespace bbdm
