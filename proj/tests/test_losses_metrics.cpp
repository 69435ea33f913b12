#include <gtest/gtest.h>

#include <json.hpp>

#include "fino/losses.hpp"
#include "fino/metrics.hpp"
#include "support.hpp"

namespace fino {
namespace {

using metrics::Confusion;

TEST(TotalLoss, WeightedSum) {
  const auto s = [](double v) { return Tensor::scalar(v, true); };
  EXPECT_NEAR(losses::total_loss(s(1), s(2), s(3), s(4), {0.1}).value, 3.7, 1e-15);
  EXPECT_EQ(losses::total_loss(s(0), s(0), s(0), s(0), {0.1}).value, 0.0);
  const auto zero_lambda = losses::total_loss(s(1.25), s(2.5), s(3), s(4), {0.0});
  EXPECT_EQ(zero_lambda.value, 1.25 + 2.5);
  EXPECT_EQ(zero_lambda.l_gcl, 3.0);
}

TEST(TotalLoss, LinearCoefficientsInGradient) {
  std::array<Tensor, 4> c{Tensor::scalar(0.3, true), Tensor::scalar(0.1, true), Tensor::scalar(0.7, true),
                          Tensor::scalar(0.2, true)};
  losses::total_loss(c[0], c[1], c[2], c[3], {0.25}).total.backward();
  EXPECT_EQ(c[0].grad()[0], 1.0);
  EXPECT_EQ(c[1].grad()[0], 1.0);
  EXPECT_EQ(c[2].grad()[0], 0.25);
  EXPECT_EQ(c[3].grad()[0], 0.25);
}

TEST(TotalLoss, RejectsBadInputs) {
  const auto ok = Tensor::scalar(1.0);
  EXPECT_THROW(losses::total_loss(ok, ok, ok, ok, {-0.1}), PreconditionError);
  EXPECT_THROW(losses::total_loss(Tensor::zeros({2}), ok, ok, ok, {0.1}), PreconditionError);
  EXPECT_THROW(losses::total_loss(ok, ok, ok, ok, {std::numeric_limits<double>::infinity()}), PreconditionError);
  auto bad = Tensor::scalar(1.0);
  bad.mutable_values()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    losses::total_loss(ok, bad, ok, ok, {0.1});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("l_sal"), std::string::npos);
  }
}

TEST(Confusion, Cases) {
  std::mt19937_64 rng(1);
  const auto gt = testing::random_mask({1, 16, 16}, rng);
  const auto same = metrics::confusion(gt, gt);
  EXPECT_EQ(same.fp, 0u);
  EXPECT_EQ(same.fn, 0u);
  std::vector<double> inv;
  for (double v : gt.values()) inv.push_back(1.0 - v);
  const auto flipped = metrics::confusion(Tensor::from(gt.shape(), inv), gt);
  EXPECT_EQ(flipped.tp, 0u);
  EXPECT_EQ(flipped.tn, 0u);
  EXPECT_THROW(metrics::confusion(Tensor::full({4}, 0.5), Tensor::zeros({4})), PreconditionError);
  EXPECT_THROW(metrics::confusion(Tensor::zeros({4}), Tensor::zeros({5})), PreconditionError);
}

TEST(Confusion, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    const auto p = testing::random_mask({1, 16, 16}, rng, 0.3);
    const auto g = testing::random_mask({1, 16, 16}, rng, 0.4);
    const auto c = metrics::confusion(p, g);
    const auto o = testing::oracle::confusion({p.values().begin(), p.values().end()}, {g.values().begin(), g.values().end()});
    EXPECT_EQ(c, (Confusion{o.tp, o.fp, o.fn, o.tn}));
  }
}

TEST(Metrics, DefinitionArithmetic) {
  const auto r = metrics::metrics({9, 1, 1, 100});
  EXPECT_DOUBLE_EQ(r.precision, 0.9);
  EXPECT_DOUBLE_EQ(r.recall, 0.9);
  EXPECT_NEAR(r.f1, 0.9, 1e-15);
  EXPECT_NEAR(r.iou, 9.0 / 11.0, 1e-15);
}

TEST(Metrics, PerfectEmptyConvention) {
  const auto r = metrics::metrics({0, 0, 0, 50});
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.f1, 1.0);
  EXPECT_EQ(r.iou, 1.0);
  // Missing every positive: precision 0/0 with a non-empty union is 0.
  const auto miss = metrics::metrics({0, 0, 5, 50});
  EXPECT_EQ(miss.precision, 0.0);
  EXPECT_EQ(miss.recall, 0.0);
  EXPECT_EQ(miss.f1, 0.0);
}

TEST(Metrics, F1IouIdentityAndScaleInvariance) {
  for (std::uint64_t tp = 0; tp <= 20; ++tp)
    for (std::uint64_t fp = 0; fp <= 20; ++fp)
      for (std::uint64_t fn = 0; fn <= 20; ++fn) {
        if (tp + fp + fn == 0) continue;
        const auto r = metrics::metrics({tp, fp, fn, 7});
        ASSERT_NEAR(r.f1, 2 * r.iou / (1 + r.iou), 1e-12) << tp << " " << fp << " " << fn;
        const auto k = metrics::metrics({tp * 3, fp * 3, fn * 3, 21});
        ASSERT_NEAR(k.f1, r.f1, 1e-15);
        ASSERT_NEAR(k.iou, r.iou, 1e-15);
        ASSERT_NEAR(k.precision, r.precision, 1e-15);
        ASSERT_NEAR(k.recall, r.recall, 1e-15);
      }
}

TEST(Metrics, ReferenceConstantsSatisfyIdentity) {
  const double iou = metrics::kReferenceLevirIoU;
  EXPECT_NEAR(2 * iou / (1 + iou), metrics::kReferenceLevirF1, 5e-4);
}

TEST(Metrics, JsonKeys) {
  const auto j = nlohmann::json::parse(metrics::to_json(metrics::metrics({9, 1, 1, 100})));
  for (const auto* k : {"tp", "fp", "fn", "tn", "precision", "recall", "f1", "iou"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j.size(), 8u);
  EXPECT_EQ(j["tp"], 9);
  EXPECT_DOUBLE_EQ(j["precision"].get<double>(), 0.9);
}

}  // namespace
}  // namespace fino
