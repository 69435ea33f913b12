#include <gtest/gtest.h>

#include <cmath>

#include "fino/ops.hpp"
#include "support.hpp"

namespace fino {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

TEST(Conv2d, UnitKernelIsIdentity) {
  std::mt19937_64 rng(1);
  const auto x = random_tensor({2, 1, 5, 6}, rng);
  const auto y = ops::conv2d(x, Tensor::from({1, 1, 1, 1}, {1.0}));
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(max_abs_diff(y.values(), x.values()), 0.0);
}

TEST(Conv2d, OnesKernelCountsOverlap) {
  const auto y = ops::conv2d(Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0), 1, {1, 1});
  EXPECT_EQ(vals(y), (std::vector<double>{4, 6, 4, 6, 9, 6, 4, 6, 4}));
}

TEST(Conv2d, RowKernelMatchesLoopOracle) {
  std::mt19937_64 rng(2);
  const auto x = random_tensor({1, 5, 7, 7}, rng);
  const auto k = random_tensor({1, 5, 1, 3}, rng);
  const auto expect = testing::oracle::conv2d(vals(x), 1, 5, 7, 7, vals(k), 1, 1, 3, 1, 0, 0);
  EXPECT_LE(max_abs_diff(ops::conv2d(x, k), expect), 1e-12);
}

TEST(Conv2d, KernelShapeSweepMatchesLoopOracle) {
  std::mt19937_64 rng(3);
  for (std::size_t kh : {1, 3, 5})
    for (std::size_t kw : {1, 3, 5})
      for (std::size_t stride : {1, 2}) {
        const std::size_t b = 2, cin = 3, cout = 4, h = 9, w = 8;
        const auto x = random_tensor({b, cin, h, w}, rng);
        const auto k = random_tensor({cout, cin, kh, kw}, rng);
        const ops::Padding pad{kh / 2, kw / 2};
        const auto y = ops::conv2d(x, k, stride, pad);
        const auto expect = testing::oracle::conv2d(vals(x), b, cin, h, w, vals(k), cout, kh, kw, stride, pad.h, pad.w);
        EXPECT_LE(max_abs_diff(y, expect), 1e-12) << kh << "x" << kw << " stride " << stride;
      }
}

TEST(Conv2d, Preconditions) {
  const auto x = Tensor::zeros({1, 2, 4, 4});
  EXPECT_THROW(ops::conv2d(x, Tensor::zeros({1, 3, 3, 3})), PreconditionError);
  EXPECT_THROW(ops::conv2d(x, Tensor::zeros({1, 2, 5, 5})), PreconditionError);
  EXPECT_THROW(ops::conv2d(x, Tensor::zeros({1, 2, 3, 3}), 0), PreconditionError);
  EXPECT_NO_THROW(ops::conv2d(x, Tensor::zeros({1, 2, 5, 5}), 1, {1, 1}));
}

TEST(Conv2d, OutputExtents) {
  const auto y = ops::conv2d(Tensor::zeros({1, 1, 9, 8}), Tensor::zeros({2, 1, 3, 1}), 2, {1, 0});
  EXPECT_EQ(y.shape(), (Shape{1, 2, 5, 4}));
}

TEST(Pool, AdaptiveAverageOfConstant) {
  const auto y = ops::global_avg_pool(Tensor::full({2, 3, 5, 4}, 1.75));
  EXPECT_EQ(y.shape(), (Shape{2, 3, 1, 1}));
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 1.75);
}

TEST(Pool, MaxOfTwoByTwo) {
  EXPECT_EQ(ops::max_pool2d(Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4}), 2, 2).item(), 4.0);
}

TEST(Pool, AverageMatchesBruteForceWindows) {
  std::mt19937_64 rng(4);
  const auto x = random_tensor({1, 1, 8, 8}, rng);
  EXPECT_LE(max_abs_diff(ops::avg_pool2d(x, 2, 2), testing::oracle::pool(vals(x), 1, 8, 8, 2, 2, false)), 1e-12);
  EXPECT_LE(max_abs_diff(ops::max_pool2d(x, 3, 1), testing::oracle::pool(vals(x), 1, 8, 8, 3, 1, true)), 1e-12);
}

TEST(Pool, MaxTieRoutesGradientToFirstIndex) {
  auto x = Tensor::from({1, 1, 2, 2}, {5, 5, 1, 5}, true);
  ops::sum(ops::max_pool2d(x, 2, 2)).backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{1, 0, 0, 0}));
  auto y = Tensor::from({1, 1, 2, 2}, {5, 5, 1, 5}, true);
  ops::sum(ops::global_max_pool(y)).backward();
  EXPECT_EQ(y.grad(), (std::vector<double>{1, 0, 0, 0}));
}

TEST(Pool, WindowLargerThanInputRejected) {
  EXPECT_THROW(ops::max_pool2d(Tensor::zeros({1, 1, 2, 2}), 3, 1), PreconditionError);
}

TEST(Softmax, UniformLogits) {
  const auto y = ops::softmax(Tensor::full({1, 7}, 0.3), 1);
  for (double v : y.values()) EXPECT_NEAR(v, 1.0 / 7.0, 1e-15);
}

TEST(Softmax, LogTwoPair) {
  const auto y = ops::softmax(Tensor::from({2}, {0.0, std::log(2.0)}), 0);
  EXPECT_NEAR(y.values()[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(y.values()[1], 2.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftInvarianceAndUnitSums) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto x = random_tensor({2, 3, 4, 5}, rng, -30, 30);
    for (std::size_t axis = 0; axis < 4; ++axis) {
      const auto y = ops::softmax(x, axis);
      const auto z = ops::softmax(ops::add_scalar(x, 17.3), axis);
      EXPECT_LE(max_abs_diff(y.values(), z.values()), 1e-9);
      // Sums along the axis.
      const auto& s = x.shape();
      std::size_t inner = 1;
      for (std::size_t a = axis + 1; a < 4; ++a) inner *= s[a];
      const std::size_t outer = x.numel() / (inner * s[axis]);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          double acc = 0.0;
          for (std::size_t k = 0; k < s[axis]; ++k) {
            const double v = y.values()[(o * s[axis] + k) * inner + i];
            EXPECT_GT(v, 0.0);
            acc += v;
          }
          EXPECT_NEAR(acc, 1.0, 1e-9);
        }
    }
  }
}

TEST(Softmax, ExtremeLogitsStayFinite) {
  const auto y = ops::softmax(Tensor::from({3}, {1000, 0, -1000}), 0);
  EXPECT_NEAR(y.values()[0], 1.0, 1e-15);
}

TEST(Elementwise, BasicValues) {
  EXPECT_EQ(ops::sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  std::mt19937_64 rng(6);
  const auto a = random_tensor({2, 3}, rng);
  const auto zero = ops::abs(ops::sub(a, a));
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(ops::add(a, Tensor::zeros({3, 2})), PreconditionError);
  const auto r = ops::relu(Tensor::from({3}, {-1, 0, 2}));
  EXPECT_EQ(vals(r), (std::vector<double>{0, 0, 2}));
}

TEST(Elementwise, SubgradientsAtZero) {
  auto x = Tensor::from({3}, {-1, 0, 2}, true);
  ops::sum(ops::abs(x)).backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{-1, 0, 1}));
  auto y = Tensor::from({3}, {-1, 0, 2}, true);
  ops::sum(ops::relu(y)).backward();
  EXPECT_EQ(y.grad(), (std::vector<double>{0, 0, 1}));
}

TEST(Elementwise, BroadcastMulMatchesChannelLoop) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t b = testing::pick(rng, 1, 3), c = testing::pick(rng, 1, 5), h = testing::pick(rng, 1, 6),
                      w = testing::pick(rng, 1, 6);
    const auto f = random_tensor({b, c, h, w}, rng);
    const auto m = random_tensor({b, 1, h, w}, rng);
    std::vector<double> expect(f.numel());
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t k = 0; k < h * w; ++k)
          expect[(i * c + ch) * h * w + k] = f.values()[(i * c + ch) * h * w + k] * m.values()[i * h * w + k];
    EXPECT_LE(max_abs_diff(ops::broadcast_mul(f, m), expect), 0.0);
  }
  EXPECT_THROW(ops::broadcast_mul(Tensor::zeros({1, 2, 3, 3}), Tensor::zeros({1, 2, 3, 3})), PreconditionError);
}

TEST(Elementwise, DispatchAgreesWithNamedOps) {
  std::mt19937_64 rng(8);
  const auto a = random_tensor({1, 2, 3, 3}, rng);
  const auto b = random_tensor({1, 2, 3, 3}, rng);
  EXPECT_EQ(max_abs_diff(ops::elementwise(a, b, ops::Elementwise::Mul).values(), ops::mul(a, b).values()), 0.0);
  EXPECT_EQ(ops::elementwise(a, b, ops::Elementwise::ConcatChannels).shape(), (Shape{1, 4, 3, 3}));
  EXPECT_EQ(max_abs_diff(ops::elementwise(a, b, ops::Elementwise::Relu).values(), ops::relu(a).values()), 0.0);
}

TEST(Resize, ConstantStaysConstant) {
  for (auto mode : {ops::ResizeMode::Bilinear, ops::ResizeMode::Nearest}) {
    const auto y = ops::resize(Tensor::full({1, 2, 3, 5}, 0.7), 11, 4, mode);
    EXPECT_EQ(y.shape(), (Shape{1, 2, 11, 4}));
    for (double v : y.values()) EXPECT_NEAR(v, 0.7, 1e-15);
  }
}

TEST(Resize, NearestDoublingReplicatesBlocks) {
  const auto y = ops::resize(Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4}), 4, 4, ops::ResizeMode::Nearest);
  EXPECT_EQ(vals(y), (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
}

TEST(Resize, BilinearHalfPixelCenters) {
  // align_corners=false: output pixel 1 of a 2->4 upsample samples source 0.25.
  const auto y = ops::resize(Tensor::from({1, 1, 1, 2}, {0, 1}), 1, 4, ops::ResizeMode::Bilinear);
  EXPECT_EQ(vals(y), (std::vector<double>{0, 0.25, 0.75, 1}));
}

TEST(Gather, ScatterAddsBack) {
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  const auto y = ops::gather(x, {4}, {0, 2, 2, 1});
  EXPECT_EQ(vals(y), (std::vector<double>{1, 3, 3, 2}));
  ops::sum(y).backward();
  EXPECT_EQ(x.grad(), (std::vector<double>{1, 1, 2}));
  EXPECT_THROW(ops::gather(x, {1}, {3}), PreconditionError);
}

TEST(ChannelCosine, MatchesLoop) {
  std::mt19937_64 rng(9);
  const auto a = random_tensor({2, 5, 3, 4}, rng);
  const auto b = random_tensor({2, 5, 3, 4}, rng);
  std::vector<double> expect;
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t k = 0; k < 12; ++k) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t c = 0; c < 5; ++c) {
        const double x = a.values()[(n * 5 + c) * 12 + k], y = b.values()[(n * 5 + c) * 12 + k];
        dot += x * y;
        na += x * x;
        nb += y * y;
      }
      expect.push_back(dot / std::max(std::sqrt(na) * std::sqrt(nb), 1e-8));
    }
  EXPECT_LE(max_abs_diff(ops::channel_cosine(a, b), expect), 1e-12);
  EXPECT_EQ(ops::channel_cosine(Tensor::zeros({1, 3, 1, 1}), Tensor::full({1, 3, 1, 1}, 2.0)).item(), 0.0);
}

TEST(Bce, MatchesScalarOracle) {
  std::mt19937_64 rng(10);
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = random_tensor({1, 1, 6, 7}, rng, 0.0, 1.0);
    const auto t = testing::random_mask({1, 1, 6, 7}, rng);
    EXPECT_NEAR(ops::bce_mean(p, t, 1e-6).item(), testing::oracle::bce(vals(p), vals(t), 1e-6), 1e-10);
  }
}

TEST(GroupNorm, NormalizesEachGroup) {
  std::mt19937_64 rng(11);
  const auto x = random_tensor({2, 4, 3, 3}, rng, -3, 5);
  const auto y = ops::group_norm(x, 2, Tensor::full({4}, 1.0), Tensor::zeros({4}), 0.0);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t g = 0; g < 2; ++g) {
      double mean = 0, var = 0;
      for (std::size_t k = 0; k < 18; ++k) mean += y.values()[(n * 4 + g * 2) * 9 + k];
      mean /= 18;
      for (std::size_t k = 0; k < 18; ++k) var += std::pow(y.values()[(n * 4 + g * 2) * 9 + k] - mean, 2);
      EXPECT_NEAR(mean, 0.0, 1e-12);
      EXPECT_NEAR(var / 18, 1.0, 1e-12);
    }
  EXPECT_THROW(ops::group_norm(x, 3, Tensor::full({4}, 1.0), Tensor::zeros({4})), PreconditionError);
}

TEST(BranchTrace, DigestSeparatesSides) {
  const auto digest = [](double v) {
    ops::BranchTrace t;
    ops::relu(Tensor::scalar(v));
    return t.digest();
  };
  EXPECT_EQ(digest(0.5), digest(2.0));
  EXPECT_NE(digest(0.5), digest(-0.5));
  EXPECT_EQ(ops::BranchTrace::active(), nullptr);
}

}  // namespace
}  // namespace fino
