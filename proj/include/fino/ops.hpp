#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "fino/tensor.hpp"

// Differentiable operations over Tensor. Image-like tensors use B x C x H x W.
// There is no implicit broadcasting; the few broadcasting ops name the
// broadcast in their signature.
namespace fino::ops {

/// While alive, folds the branch taken by every piecewise op on this thread
/// (relu/abs/clamp sides, max-pool argmax, probability clamps, cosine guard)
/// into a digest. Two evaluations with equal digests ran on the same smooth
/// piece of the function.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t digest() const { return digest_; }
  std::size_t decisions() const { return decisions_; }
  void record(std::uint64_t branch);

  /// Innermost live trace on this thread, or null.
  static BranchTrace* active();

 private:
  BranchTrace* outer_;
  std::uint64_t digest_ = 0xcbf29ce484222325ULL;
  std::size_t decisions_ = 0;
};

struct Padding {
  std::size_t h = 0;
  std::size_t w = 0;
};

/// Cross-correlation of input [B,Cin,H,W] with kernel [Cout,Cin,kh,kw].
/// Output extents are floor((H + 2*pad.h - kh) / stride) + 1 (same for W).
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride = 1, Padding padding = {});

/// "Same" padding for odd kernels: (kh/2, kw/2).
Padding same_padding(const Tensor& kernel);

/// x [B,C,H,W] + bias [C] broadcast over batch and space.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

enum class PoolKind { Max, Avg, AdaptiveAvg, AdaptiveMax };

/// Windowed pooling without padding. The adaptive kinds reduce every channel to
/// 1x1 and ignore window/stride. Max pooling routes the gradient to the first
/// row-major argmax on ties.
Tensor pool2d(const Tensor& x, PoolKind kind, std::size_t window = 0, std::size_t stride = 0);
inline Tensor max_pool2d(const Tensor& x, std::size_t window, std::size_t stride) {
  return pool2d(x, PoolKind::Max, window, stride);
}
inline Tensor avg_pool2d(const Tensor& x, std::size_t window, std::size_t stride) {
  return pool2d(x, PoolKind::Avg, window, stride);
}
inline Tensor global_avg_pool(const Tensor& x) { return pool2d(x, PoolKind::AdaptiveAvg); }
inline Tensor global_max_pool(const Tensor& x) { return pool2d(x, PoolKind::AdaptiveMax); }

/// Numerically stable softmax along `axis` (max-subtracted).
Tensor softmax(const Tensor& x, std::size_t axis);

enum class Elementwise { Add, Sub, Mul, Abs, Sigmoid, Relu, ConcatChannels, BroadcastMul };

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Subgradient sign(x) with sign(0) = 0.
Tensor abs(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Subgradient 0 at x = 0.
Tensor relu(const Tensor& x);
Tensor concat_channels(std::span<const Tensor> parts);
Tensor concat_channels(std::initializer_list<Tensor> parts);
/// features [B,C,H,W] times a single-channel map [B,1,H,W], broadcast over C.
Tensor broadcast_mul(const Tensor& features, const Tensor& map);

/// Dispatch by kind. Unary kinds ignore `b`; ConcatChannels joins a and b.
Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise kind);

/// x [B,C,H,W] times per-channel weights, either [C] (shared over the batch)
/// or [B,C,1,1].
Tensor scale_channels(const Tensor& x, const Tensor& weights);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
/// Gradient passes where lo <= x <= hi.
Tensor clamp(const Tensor& x, double lo, double hi);

enum class ResizeMode { Nearest, Bilinear };

/// Spatial resize of [B,C,H,W]. Bilinear follows the align_corners=false
/// convention; nearest picks floor(dst * in / out).
Tensor resize(const Tensor& x, std::size_t height, std::size_t width, ResizeMode mode);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// out[i] = x[index[i]] (flat indices); gradient scatter-adds back.
Tensor gather(const Tensor& x, Shape out_shape, std::vector<std::size_t> index);
Tensor reshape(const Tensor& x, Shape shape);

/// Cosine similarity along the channel axis: [B,C,H,W] x2 -> [B,1,H,W].
/// Denominator is max(|a||b|, eps).
Tensor channel_cosine(const Tensor& a, const Tensor& b, double eps = 1e-8);

/// Mean binary cross-entropy of probabilities against a constant target of the
/// same shape. Probabilities are clamped to [eps, 1 - eps]; the clamped region
/// has zero gradient.
Tensor bce_mean(const Tensor& prob, const Tensor& target, double eps = 1e-6);

/// Group normalization over (C/groups, H, W) with per-channel affine [C].
Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

}  // namespace fino::ops
