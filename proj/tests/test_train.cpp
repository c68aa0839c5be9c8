#include <gtest/gtest.h>

#include "landscape/error.hpp"
#include "landscape/train.hpp"
#include "support.hpp"

namespace {

using namespace landscape;
using namespace landscape::train;
using landscape::testing::random_tensor;
using landscape::testing::tiny_net;

data::Dataset two_class_set(std::size_t per_class, std::uint64_t seed) {
  data::SyntheticSpec s;
  s.classes = 2;
  s.per_class = per_class;
  s.height = s.width = 8;
  s.noise = 0.1;
  s.seed = seed;
  return data::make_synthetic(s);
}

TrainConfig quick_config() {
  TrainConfig c;
  c.lr0 = 0.05;
  c.lr_min = 0.0;
  c.epochs = 3;
  c.batch = 16;
  c.crop_padding = 1;
  c.seed = 7;
  return c;
}

TEST(Schedule, CosineEndpointsAndMidpoint) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 200, 0.1, 1e-5), 0.1);
  EXPECT_NEAR(cosine_lr(200, 200, 0.1, 1e-5), 1e-5, 1e-18);
  EXPECT_NEAR(cosine_lr(100, 200, 0.1, 1e-5), 0.05 + 0.5e-5, 1e-15);
  EXPECT_THROW(cosine_lr(201, 200, 0.1, 0.0), ValueError);
  EXPECT_THROW(cosine_lr(0, 0, 0.1, 0.0), ValueError);
}

TEST(Schedule, MonotoneNonIncreasing) {
  for (std::size_t t = 1; t <= 50; ++t) EXPECT_LE(cosine_lr(t, 50, 0.3, 0.01), cosine_lr(t - 1, 50, 0.3, 0.01));
}

TEST(Augment, CentredCropWithoutFlipIsIdentity) {
  std::mt19937_64 rng(1);
  const auto img = random_tensor<double>({3, 5, 6}, rng, 0.0, 1.0);
  EXPECT_EQ(crop_flip(img, 4, 4, 4, false), img);
}

TEST(Augment, FlipIsAnInvolution) {
  std::mt19937_64 rng(2);
  const auto img = random_tensor<double>({2, 4, 7}, rng, 0.0, 1.0);
  const auto once = crop_flip(img, 0, 0, 0, true);
  EXPECT_NE(once, img);
  EXPECT_EQ(crop_flip(once, 0, 0, 0, true), img);
  EXPECT_EQ(once[6], img[0]);
}

TEST(Augment, ShiftPullsInTheFill) {
  const Tensor<double> img({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  // Top-left window of the padded image shifts content down-right by one.
  EXPECT_EQ(crop_flip(img, 1, 0, 0, false, 0.5), Tensor<double>({1, 2, 2}, std::vector<double>{0.5, 0.5, 0.5, 1}));
  EXPECT_THROW(crop_flip(img, 1, 3, 0, false), ValueError);
  EXPECT_THROW(crop_flip(Tensor<double>({2, 2}), 1, 0, 0, false), ShapeError);
}

TEST(Augment, DisabledAugmentationIsIdentity) {
  std::mt19937_64 rng(3);
  const auto img = random_tensor<float>({3, 8, 8}, rng, 0.0, 1.0);
  TrainConfig c;
  c.crop = false;
  c.flip = false;
  EXPECT_EQ(augment(img, rng, c), img);
}

TEST(Sgd, PlainStepIsMinusLrTimesGrad) {
  Parameter<double> w{"w", Tensor<double>({3}, std::vector<double>{1.0, -2.0, 0.5})};
  Parameter<double> frozen{"f", Tensor<double>({1}, 3.0), false};
  auto g = w.tensor.grad();
  g[0] = 0.5, g[1] = -1.0, g[2] = 2.0;
  frozen.tensor.grad()[0] = 1.0;
  Sgd<double> sgd(0.0, 0.0);
  sgd.step({&w, &frozen}, 0.1);
  EXPECT_DOUBLE_EQ(w.tensor[0], 1.0 - 0.05);
  EXPECT_DOUBLE_EQ(w.tensor[1], -2.0 + 0.1);
  EXPECT_DOUBLE_EQ(w.tensor[2], 0.5 - 0.2);
  EXPECT_EQ(frozen.tensor[0], 3.0);
}

TEST(Sgd, MomentumAndDecayOracle) {
  // v1 = g + wd p0; p1 = p0 - lr v1; v2 = m v1 + g + wd p1; p2 = p1 - lr v2.
  const double p0 = 2.0, g = 0.3, m = 0.9, wd = 0.01, lr = 0.1;
  Parameter<double> w{"w", Tensor<double>({1}, p0)};
  Parameter<double> bn{"bn", Tensor<double>({1}, p0), true, false};
  Sgd<double> sgd(m, wd);
  for (int k = 0; k < 2; ++k) {
    w.tensor.grad()[0] = g;
    bn.tensor.grad()[0] = g;
    sgd.step({&w, &bn}, lr);
  }
  const double v1 = g + wd * p0;
  const double p1 = p0 - lr * v1;
  const double v2 = m * v1 + g + wd * p1;
  EXPECT_NEAR(w.tensor[0], p1 - lr * v2, 1e-15);
  const double q1 = p0 - lr * g;
  EXPECT_NEAR(bn.tensor[0], q1 - lr * (m * g + g), 1e-15);
}

TEST(Fit, ZeroLearningRateLeavesParametersUnchanged) {
  const auto ds = two_class_set(12, 1);
  model::ResNet<float> net(tiny_net(2), 0);
  std::vector<Tensor<float>> before;
  for (const auto* p : net.parameters()) {
    if (p->trainable) before.push_back(p->tensor);
  }
  TrainConfig c = quick_config();
  c.lr0 = 0.0;
  c.epochs = 2;
  fit(net, ds, nullptr, std::nullopt, c);
  std::size_t k = 0;
  for (const auto* p : net.parameters()) {
    if (p->trainable) EXPECT_EQ(p->tensor, before[k++]) << p->name;
  }
}

TEST(Fit, SameSeedsAreBitIdentical) {
  const auto ds = two_class_set(12, 2);
  sbde::ExpansionSpec spec;
  spec.factor = 2;
  spec.channels = 3;
  spec.height = spec.width = 8;
  auto run = [&]() {
    model::ResNet<float> net(tiny_net(2), 5);
    const auto h = fit(net, ds, &ds, spec, quick_config());
    std::vector<float> flat;
    for (const auto* p : net.parameters()) flat.insert(flat.end(), p->tensor.values().begin(), p->tensor.values().end());
    return std::make_pair(h.back().train_loss, flat);
  };
  EXPECT_EQ(run(), run());
}

TEST(Fit, HistoryRecordsScheduleAndAccuracy) {
  const auto ds = two_class_set(8, 3);
  model::ResNet<float> net(tiny_net(2), 0);
  TrainConfig c = quick_config();
  std::size_t calls = 0;
  const auto h = fit(net, ds, nullptr, std::nullopt, c, [&](const EpochRecord&) { ++calls; });
  ASSERT_EQ(h.size(), 3u);
  EXPECT_EQ(calls, 3u);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(h[e].epoch, e + 1);
    EXPECT_DOUBLE_EQ(h[e].lr, cosine_lr(e, 3, c.lr0, c.lr_min));
    EXPECT_LT(h[e].test_acc, 0.0);
  }
}

TEST(Fit, RejectsBadConfigs) {
  const auto ds = two_class_set(4, 4);
  model::ResNet<float> net(tiny_net(2), 0);
  TrainConfig c = quick_config();
  c.lr_min = 1.0;
  EXPECT_THROW(fit(net, ds, nullptr, std::nullopt, c), ValueError);
  c = quick_config();
  c.momentum = 1.0;
  EXPECT_THROW(fit(net, ds, nullptr, std::nullopt, c), ValueError);
}

TEST(Fit, LearnsTwoSyntheticClassesOnExpandedInputs) {
  const auto ds = two_class_set(40, 5);
  sbde::ExpansionSpec spec;
  spec.factor = 2;
  spec.channels = 3;
  spec.height = spec.width = 8;
  model::ResNet<float> net(tiny_net(2), 1);
  TrainConfig c = quick_config();
  c.epochs = 8;
  fit(net, ds, nullptr, spec, c);
  EXPECT_GT(evaluate_clean(net, ds, spec), 0.9);
}

TEST(Fit, DeskModelSeparatesTwoNoisyClassesWithinFiveEpochs) {
  data::SyntheticSpec s;
  s.classes = 2;
  s.per_class = 100;
  s.noise = 0.1;
  s.seed = 11;
  const auto train_set = data::make_synthetic(s, data::Split::train);
  const auto test_set = data::make_synthetic(s, data::Split::test);
  model::NetConfig desk = model::NetConfig::desk();
  desk.num_classes = 2;
  model::ResNet<float> net(desk, 0);
  TrainConfig c = quick_config();
  c.epochs = 5;
  c.batch = 32;
  c.lr0 = 0.1;
  const auto h = fit(net, train_set, &test_set, std::nullopt, c);
  EXPECT_GT(h.back().train_acc, 0.9);
  EXPECT_GT(h.back().test_acc, 0.9);
}

TEST(Inputs, ExpandedBatchesCarryTheFill) {
  const auto ds = two_class_set(3, 6);
  sbde::ExpansionSpec spec;
  spec.factor = 3;
  spec.fill = sbde::FillScheme::gap_cycle(0.2);
  spec.channels = 3;
  spec.height = spec.width = 8;
  const std::vector<std::size_t> idx{0, 3, 5};
  const auto x = make_inputs<float>(ds, idx, spec);
  EXPECT_EQ(x.shape(), (Shape{3, 3, 24, 24}));
  EXPECT_TRUE(sbde::aux_matches_fill(x, spec));
  auto bad = x;
  bad[1] += 0.5f;
  EXPECT_FALSE(sbde::aux_matches_fill(bad, spec));
}

}  // namespace
