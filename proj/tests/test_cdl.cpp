#include <gtest/gtest.h>

#include <cmath>

#include "fino/cdl.hpp"
#include "fino/ops.hpp"
#include "support.hpp"

namespace fino::cdl {
namespace {

constexpr std::array<std::size_t, backbone::kStages> kWidths{3, 4, 5, 6};

std::array<Tensor, backbone::kStages> random_diffs(std::mt19937_64& rng, std::size_t side = 32) {
  std::array<Tensor, backbone::kStages> d;
  for (std::size_t i = 0; i < backbone::kStages; ++i) {
    const std::size_t s = side >> i;
    d[i] = testing::random_tensor({2, kWidths[i], s, s}, rng, 0, 1);
  }
  return d;
}

TEST(RegionSoftmax, EachRegionSumsToOne) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t r = testing::pick(rng, 1, 4);
    const std::size_t h = r * testing::pick(rng, 1, 3), w = r * testing::pick(rng, 1, 3);
    const auto a = region_softmax(testing::random_tensor({2, 1, h, w}, rng, -5, 5), r, 7.0);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t y0 = 0; y0 < h; y0 += r)
        for (std::size_t x0 = 0; x0 < w; x0 += r) {
          double s = 0;
          for (std::size_t y = y0; y < y0 + r; ++y)
            for (std::size_t x = x0; x < x0 + r; ++x) {
              const double v = a.values()[(b * h + y) * w + x];
              EXPECT_GT(v, 0.0);
              s += v;
            }
          EXPECT_NEAR(s, 1.0, 1e-9);
        }
  }
}

TEST(RegionSoftmax, SingleRegionMatchesGlobalSoftmaxOracle) {
  std::mt19937_64 rng(2);
  const std::size_t h = 4, w = 4;
  const double dk = 9.0;
  const auto scores = testing::random_tensor({1, 1, h, w}, rng, -3, 3);
  std::vector<double> expect(h * w);
  double z = 0;
  for (std::size_t i = 0; i < h * w; ++i) z += std::exp(scores.values()[i] / std::sqrt(dk));
  for (std::size_t i = 0; i < h * w; ++i) expect[i] = std::exp(scores.values()[i] / std::sqrt(dk)) / z;
  EXPECT_LE(testing::max_abs_diff(region_softmax(scores, 4, dk), expect), 1e-15);
}

TEST(RegionSoftmax, Preconditions) {
  EXPECT_THROW(region_softmax(Tensor::zeros({1, 1, 6, 6}), 4, 1.0), PreconditionError);
  EXPECT_THROW(region_softmax(Tensor::zeros({1, 2, 4, 4}), 2, 1.0), PreconditionError);
  EXPECT_THROW(region_softmax(Tensor::zeros({1, 1, 4, 4}), 2, 0.5), PreconditionError);
  EXPECT_EQ(effective_region(4, 2, 2), 2u);
  EXPECT_EQ(effective_region(4, 8, 8), 4u);
}

TEST(CdlForward, ConstantScoresGiveUniformAttention) {
  ParamStore params;
  init_params(params, kWidths, 1);
  for (auto& v : params.get("cdl.stage2.phi1.weight").mutable_values()) v = 0.0;
  std::mt19937_64 rng(3);
  const auto c = testing::random_tensor({1, 4, 8, 8}, rng, 0, 1);
  const auto z = testing::random_tensor({1, 5, 4, 4}, rng, 0, 1);
  const auto out = cdl_forward(2, c, z, params, {});
  for (double v : out.attention.values()) EXPECT_NEAR(v, 1.0 / 16.0, 1e-15);
  const auto value = ops::add_channel_bias(ops::conv2d(c, params.get("cdl.stage2.phi2.weight")),
                                           params.get("cdl.stage2.phi2.bias"));
  EXPECT_LE(testing::max_abs_diff(out.context.values(), ops::scale(value, 1.0 / 16.0).values()), 1e-15);
}

TEST(CdlForward, ShiftInvariantScores) {
  ParamStore params;
  init_params(params, kWidths, 2);
  std::mt19937_64 rng(4);
  const auto c = testing::random_tensor({2, 3, 8, 8}, rng, 0, 1);
  const auto z = testing::random_tensor({2, 4, 4, 4}, rng, 0, 1);
  const auto base = cdl_forward(1, c, z, params, {});
  params.get("cdl.stage1.phi1.bias").mutable_values()[0] += 12.5;
  const auto shifted = cdl_forward(1, c, z, params, {});
  EXPECT_LE(testing::max_abs_diff(base.attention.values(), shifted.attention.values()), 1e-9);
}

TEST(CdlForward, DisabledAttentionIsPlainProjection) {
  ParamStore params;
  init_params(params, kWidths, 3);
  std::mt19937_64 rng(5);
  const auto c = testing::random_tensor({1, 6, 2, 2}, rng, 0, 1);
  const auto out = cdl_forward(4, c, std::nullopt, params, {4, false});
  EXPECT_FALSE(out.attention.defined());
  EXPECT_EQ(out.context.shape(), c.shape());
}

TEST(CdlForward, TopStageSelfGuides) {
  ParamStore params;
  init_params(params, kWidths, 4);
  EXPECT_EQ(params.get("cdl.stage4.phi1.weight").dim(1), 12u);
  EXPECT_EQ(params.get("cdl.stage3.phi1.weight").dim(1), 5u + 6u);
}

Tensor produce_context(std::size_t, const std::optional<ContextFeature>& ctx, const Tensor& fallback) {
  return ctx ? ctx->context : fallback;
}

TEST(Cascade, ZeroDifferencesGiveZeroContexts) {
  ParamStore params;
  init_params(params, kWidths, 5);
  // phi2 is bias-free here so that T is linear in C.
  for (std::size_t s = 1; s <= 4; ++s)
    for (auto& v : params.get("cdl.stage" + std::to_string(s) + ".phi2.bias").mutable_values()) v = 0.0;
  std::array<Tensor, backbone::kStages> diffs;
  for (std::size_t i = 0; i < backbone::kStages; ++i) diffs[i] = Tensor::zeros({1, kWidths[i], 16u >> i, 16u >> i});
  const auto out = cascade(
      diffs, {true, true, true, true},
      [&](std::size_t st, const auto& ctx) { return produce_context(st, ctx, diffs[st - 1]); }, params, {});
  for (const auto& t : out) {
    ASSERT_TRUE(t.has_value());
    for (double v : t->context.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Cascade, TopStagePerturbationReachesStageOne) {
  ParamStore params;
  init_params(params, kWidths, 6);
  std::mt19937_64 rng(7);
  auto diffs = random_diffs(rng);
  auto run = [&](const std::array<Tensor, backbone::kStages>& d) {
    return cascade(
        d, {true, true, true, true}, [&](std::size_t st, const auto& ctx) { return produce_context(st, ctx, d[st - 1]); },
        params, {});
  };
  const auto base = run(diffs);
  auto bumped = diffs;
  // A spatially varying perturbation; a constant one would mostly be a score
  // shift, which the region softmax ignores.
  bumped[3] = ops::add(diffs[3], testing::random_tensor(diffs[3].shape(), rng, 0, 0.5));
  const auto moved = run(bumped);
  // Lower stages see the change only through nested attention maps, so the
  // effect shrinks with depth; it must still be there.
  for (std::size_t i = 0; i < backbone::kStages; ++i)
    EXPECT_GT(testing::max_abs_diff(base[i]->context.values(), moved[i]->context.values()), 0.0) << "stage " << i + 1;
}

TEST(Cascade, StageFourOnlyAblation) {
  ParamStore params;
  init_params(params, kWidths, 8);
  std::mt19937_64 rng(9);
  const auto diffs = random_diffs(rng);
  std::vector<std::size_t> visited;
  const auto out = cascade(
      diffs, {false, false, false, true},
      [&](std::size_t st, const auto& ctx) {
        visited.push_back(st);
        return produce_context(st, ctx, diffs[st - 1]);
      },
      params, {});
  EXPECT_EQ(visited, (std::vector<std::size_t>{4, 3, 2, 1}));
  EXPECT_TRUE(out[3].has_value());
  EXPECT_FALSE(out[0].has_value() || out[1].has_value() || out[2].has_value());
}

TEST(Cascade, OutOfOrderIsContractError) {
  ParamStore params;
  init_params(params, kWidths, 9);
  CascadeRunner runner(params, {});
  std::mt19937_64 rng(10);
  const auto diffs = random_diffs(rng);
  EXPECT_THROW(runner.advance(3, diffs[2], diffs[3]), PreconditionError);
  EXPECT_NO_THROW(runner.advance(4, diffs[3], std::nullopt));
  EXPECT_THROW(runner.advance(3, diffs[2], std::nullopt), PreconditionError);
  runner.skip(3);
  EXPECT_EQ(runner.next_stage(), 2u);
  runner.skip(2);
  runner.skip(1);
  EXPECT_THROW(runner.skip(1), PreconditionError);
}

}  // namespace
}  // namespace fino::cdl
