#pragma once

#include <array>
#include <span>
#include <vector>

#include "llie/autograd.hpp"

namespace llie::ops {

// Leaves ---------------------------------------------------------------------

inline Var constant(Tensor t) { return Var(std::move(t), false); }
/// Same value, no graph edge.
Var detach(const Var& x);

// Elementwise arithmetic ------------------------------------------------------
// Binary ops broadcast: along each axis the extents must match or one of
// them must be 1.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);
/// Broadcasts x to `shape`.
Var expand(const Var& x, Shape shape);

Var square(const Var& x);
/// x^(-1/2), elementwise.
Var rsqrt(const Var& x);
Var abs(const Var& x);

// Activations ------------------------------------------------------------------

Var leaky_relu(const Var& x, double slope);
Var sigmoid(const Var& x);
/// Exact (erf) GELU.
Var gelu(const Var& x);
/// log(1 + exp(x)) in the overflow-safe form max(x,0) + log1p(exp(-|x|)).
Var softplus(const Var& x);
/// Gradient passes only strictly inside (lo, hi).
Var clamp(const Var& x, double lo, double hi);

// Reductions -------------------------------------------------------------------

Var sum(const Var& x);
Var mean(const Var& x);
/// Mean over H and W, result (N, C, 1, 1).
Var global_avg_pool(const Var& x);
/// Sum over H and W, result (N, C, 1, 1).
Var sum_hw(const Var& x);

// Channel plumbing -------------------------------------------------------------

Var concat_channels(std::span<const Var> parts);
Var slice_channels(const Var& x, int first, int count);

// Convolution ------------------------------------------------------------------

/// Cross-correlation with zero padding. w is (Cout, Cin, k, k); bias is
/// (1, Cout, 1, 1) or undefined.
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad);
/// Per-channel k x k filtering; w is (C, 1, k, k), stride 1, "same" padding.
Var depthwise_conv2d(const Var& x, const Var& w, const Var& bias);

// Resampling -------------------------------------------------------------------

Var upsample_nearest2x(const Var& x);
/// Border-replicating pad by `pad` pixels on every side.
Var pad_replicate(const Var& x, int pad);
/// Bilinear resampling with half-pixel centers (no corner alignment).
Var resize_bilinear(const Var& x, int out_h, int out_w);

// Normalization ----------------------------------------------------------------

/// (x - mean) / sqrt(var + eps) per (batch, channel) over H x W, biased var.
Var instance_norm(const Var& x, double eps);
/// Normalizes over channels at each pixel, then applies per-channel affine
/// gamma/beta of shape (1, C, 1, 1).
Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, double eps);
/// Softmax over consecutive groups of `group` channels at every pixel.
Var softmax_channel_groups(const Var& x, int group);

// Structure-specific -----------------------------------------------------------

/// The eight compass directions used for directional gradient maps.
/// +x is increasing column index, +y is increasing row index.
enum class Direction { PosX, NegX, PosY, NegY, PosXPosY, PosXNegY, NegXPosY, NegXNegY };
inline constexpr std::array<Direction, 8> kDirections = {
    Direction::PosX,     Direction::NegX,     Direction::PosY,     Direction::NegY,
    Direction::PosXPosY, Direction::PosXNegY, Direction::NegXPosY, Direction::NegXNegY};
/// Column and row step of a direction.
std::array<int, 2> direction_step(Direction d);
const char* direction_name(Direction d);

/// Forward difference f(p + step) - f(p), zero where the neighbor falls
/// outside the tensor.
Var directional_gradient(const Var& x, Direction d);

/// Multi-head self-attention restricted to non-overlapping window x window
/// tiles. q, k, v are (N, C, H, W) with C divisible by `heads`; each pixel
/// is a token and channels [h*C/heads, (h+1)*C/heads) form head h.
Var window_attention(const Var& q, const Var& k, const Var& v, int heads, int window);

/// Attention probabilities of window_attention, laid out as
/// (N * heads * windows, 1, T, T) with T = window^2. Not differentiable.
Tensor window_attention_weights(const Tensor& q, const Tensor& k, int heads, int window);

/// Depthwise per-pixel filtering. d is (N, C, H, W); kernels is
/// (N, C*kh*kw, H, W) with tap (u, v) of channel c at c*kh*kw + u*kw + v.
/// Taps outside the image read zero.
Var spatially_varying_conv(const Var& d, const Var& kernels, int kh, int kw);

// Losses -----------------------------------------------------------------------

/// Mean binary cross-entropy with predictions clamped to [eps, 1-eps].
/// The target is treated as a constant.
Var bce_mean(const Var& pred, const Var& target, double eps);

}  // namespace llie::ops
