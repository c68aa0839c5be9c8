#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "landscape/error.hpp"
#include "landscape/probe.hpp"
#include "support.hpp"

namespace {

using namespace landscape;
using namespace landscape::probe;
using attacks::Kind;
using landscape::testing::random_tensor;
using landscape::testing::tiny_net;

sbde::ExpansionSpec make_spec(std::size_t factor, std::size_t c = 3, std::size_t h = 4, std::size_t w = 4) {
  sbde::ExpansionSpec s;
  s.factor = factor;
  s.channels = c;
  s.height = h;
  s.width = w;
  return s;
}

TEST(Mass, AuxOnlyPerturbationIsAllAux) {
  const auto spec = make_spec(3);
  const auto mask = sbde::partition(spec);
  std::mt19937_64 rng(1);
  auto d = random_tensor<double>(spec.expanded_shape(), rng, 0.1, 1.0);
  const std::size_t plane = mask.rows() * mask.cols();
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (mask.is_signal(k % plane)) d[k] = 0.0;
  }
  for (MassNorm n : {MassNorm::l1, MassNorm::l2sq, MassNorm::linf_count}) {
    const Mass m = mass_decomposition(d, mask, n);
    ASSERT_FALSE(m.empty());
    EXPECT_EQ(*m.fraction_aux, 1.0) << to_string(n);
    EXPECT_EQ(m.sig, 0.0);
  }
}

TEST(Mass, ConstantPerturbationSplitsByCardinality) {
  const auto spec = make_spec(5, 3, 32, 32);
  const auto mask = sbde::partition(spec);
  const Tensor<float> d(spec.expanded_shape(), 8.0f / 255.0f);
  const Mass l1 = mass_decomposition(d, mask, MassNorm::l1);
  EXPECT_NEAR(*l1.fraction_aux, 0.96, 1e-12);
  const Mass cnt = mass_decomposition(d, mask, MassNorm::linf_count);
  EXPECT_EQ(cnt.aux, 3.0 * (160 * 160 - 1024));
  EXPECT_EQ(cnt.sig, 3.0 * 1024);
}

TEST(Mass, ZeroTensorIsEmpty) {
  const auto spec = make_spec(2);
  const Mass m = mass_decomposition(Tensor<double>(spec.expanded_shape()), sbde::partition(spec), MassNorm::l1);
  EXPECT_TRUE(m.empty());
  EXPECT_EQ(m.total(), 0.0);
}

TEST(Mass, ShapeMismatchIsAnError) {
  const auto spec = make_spec(2);
  EXPECT_THROW(mass_decomposition(Tensor<double>({3, 4, 4}), sbde::partition(spec), MassNorm::l1), ShapeError);
}

TEST(Mass, RegionsConserveTheWholeTensorMass) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto spec = make_spec(1 + rng() % 5, 1 + rng() % 3, 1 + rng() % 5, 1 + rng() % 5);
    const auto mask = sbde::partition(spec);
    const auto d = random_tensor<double>({2, spec.channels, spec.expanded_height(), spec.expanded_width()}, rng);
    double l1 = 0.0, l2 = 0.0, mx = 0.0;
    for (double v : d.values()) l1 += std::abs(v), l2 += v * v, mx = std::max(mx, std::abs(v));
    double count = 0.0;
    for (double v : d.values()) count += std::abs(v) >= std::nextafter(mx, 0.0);
    ASSERT_NEAR(mass_decomposition(d, mask, MassNorm::l1).total(), l1, 1e-9);
    ASSERT_NEAR(mass_decomposition(d, mask, MassNorm::l2sq).total(), l2, 1e-9);
    ASSERT_NEAR(mass_decomposition(d, mask, MassNorm::linf_count).total(), count, 1e-9);
  }
}

TEST(Mass, NormNames) {
  for (MassNorm n : {MassNorm::l1, MassNorm::l2sq, MassNorm::linf_count}) EXPECT_EQ(parse_mass_norm(to_string(n)), n);
  EXPECT_THROW(parse_mass_norm("l3"), ValueError);
}

TEST(Concentration, MeansByDirectSummation) {
  const auto spec = make_spec(2, 1, 1, 1);
  const auto mask = sbde::partition(spec);
  const Tensor<double> g({1, 2, 2}, std::vector<double>{0.5, -1.0, 2.0, -3.0});
  const auto c = mean_abs_by_region(g, mask);
  EXPECT_DOUBLE_EQ(c.sig_mean, 0.5);
  EXPECT_DOUBLE_EQ(c.aux_mean, 2.0);
  EXPECT_DOUBLE_EQ(c.ratio(), 4.0);
}

TEST(Alignment, PhaseExamples) {
  const auto a = alignment_phase(4, 2, 7);
  EXPECT_EQ(a.distinct, 2u);
  EXPECT_TRUE(a.aligned_gcd);
  EXPECT_TRUE(a.aligned_multiple);
  const auto b = alignment_phase(5, 2, 7);
  EXPECT_EQ(b.distinct, 5u);
  EXPECT_FALSE(b.aligned_gcd);
  EXPECT_FALSE(b.aligned_multiple);
  const auto c = alignment_phase(6, 4, 7);
  EXPECT_EQ(c.distinct, 3u);
  EXPECT_TRUE(c.aligned_gcd);
  EXPECT_FALSE(c.aligned_multiple);
}

TEST(Alignment, DistinctPhasesFollowGcd) {
  for (std::size_t f = 1; f <= 9; ++f) {
    for (std::size_t s = 1; s <= 5; ++s) {
      for (std::size_t pad : {0u, 1u, 3u}) {
        const auto p = alignment_phase(f, s, 7, pad);
        ASSERT_EQ(p.distinct, f / std::gcd(f, s));
        ASSERT_EQ(p.aligned_gcd, p.distinct < f);
        ASSERT_EQ(p.aligned_multiple, f % s == 0);
        ASSERT_EQ(p.phases.size(), f);
        ASSERT_EQ(std::accumulate(p.phase_counts.begin(), p.phase_counts.end(), std::size_t{0}), f);
        ASSERT_LE(p.min_signal_taps, p.max_signal_taps);
      }
    }
  }
}

TEST(Alignment, SignalTapsOfAStrideOneKernel) {
  // A 7-tap window over a factor-5 lattice covers one or two signal taps.
  const auto p = alignment_phase(5, 1, 7);
  EXPECT_EQ(p.min_signal_taps, 1u);
  EXPECT_EQ(p.max_signal_taps, 2u);
}

struct TraceFixture : ::testing::Test {
  sbde::ExpansionSpec spec = make_spec(3);
  data::Dataset ds;
  std::unique_ptr<model::ResNet<double>> net;
  Tensor<double> x0;

  void SetUp() override {
    data::SyntheticSpec s;
    s.classes = 3;
    s.per_class = 4;
    s.height = s.width = 4;
    ds = data::make_synthetic(s, data::Split::test);
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    net = std::make_unique<model::ResNet<double>>(tiny_net(3), 4);
    train::calibrate_batchnorm(*net, train::make_inputs<double>(ds, all, spec));
    const std::vector<std::size_t> first{0};
    x0 = train::make_inputs<double>(ds, first, spec);
  }
};

TEST_F(TraceFixture, ZeroEpsilonKeepsTheCleanLoss) {
  const auto attack = attacks::AttackSpec::defaults(Kind::pgd, 0.0, spec.default_box());
  const auto t = trace_attack(*net, x0, ds.labels[0], attack, spec);
  ASSERT_EQ(t.records.size(), 22u);
  for (const auto& r : t.records) {
    EXPECT_EQ(r.loss, t.recovery.loss_clean);
    EXPECT_EQ(r.mass_aux, 0.0);
    EXPECT_EQ(r.mass_sig, 0.0);
  }
  EXPECT_EQ(t.records.back().step, 21);
  EXPECT_EQ(t.recovery.loss_projected, t.recovery.loss_clean);
  EXPECT_EQ(t.recovery.pred_projected, t.recovery.pred_clean);
  EXPECT_TRUE(t.recovery.recovered);
}

TEST_F(TraceFixture, TracksTheRequestedPixelPair) {
  const TrackedPixel px{1, 3, 6};
  auto attack = attacks::AttackSpec::defaults(Kind::bim, 8.0 / 255.0, spec.default_box());
  const auto t = trace_attack(*net, x0, ds.labels[0], attack, spec, px);
  EXPECT_EQ(t.records.front().x_sig, x0[(1 * 12 + 3) * 12 + 6]);
  EXPECT_EQ(t.records.front().y_aux, x0[(1 * 12 + 3) * 12 + 7]);
  // The terminal record is the projected image: the aux coordinate is back
  // at its fill and the perturbation has no aux mass.
  EXPECT_EQ(t.records.back().y_aux, 0.0);
  EXPECT_EQ(t.records.back().mass_aux, 0.0);
  EXPECT_EQ(t.records.back().loss, t.recovery.loss_projected);
  EXPECT_EQ(t.records[t.records.size() - 2].loss, t.recovery.loss_adv);
  for (std::size_t k = 1; k + 1 < t.records.size(); ++k) {
    EXPECT_LE(std::abs(t.records[k].x_sig - t.records[0].x_sig), 8.0 / 255.0 + 1e-15);
  }
}

TEST_F(TraceFixture, AuxOnlyAttackIsFullyErased) {
  // A fixed aux-only perturbation: project() resets it and the projected loss
  // is the clean loss bit for bit.
  const auto mask = sbde::partition(spec);
  auto adv = x0;
  const std::size_t plane = mask.rows() * mask.cols();
  for (std::size_t k = 0; k < adv.size(); ++k) {
    if (!mask.is_signal(k % plane)) adv[k] += 0.03;
  }
  const std::vector<int> y{ds.labels[0]};
  EXPECT_EQ(attacks::losses(*net, sbde::project(adv, spec), y), attacks::losses(*net, x0, y));
}

TEST_F(TraceFixture, PixelMustBeASignalCoordinate) {
  const auto attack = attacks::AttackSpec::defaults(Kind::pgd, 8.0 / 255.0, spec.default_box());
  EXPECT_THROW(trace_attack(*net, x0, ds.labels[0], attack, spec, TrackedPixel{0, 1, 0}), ValueError);
  const auto px = random_signal_pixel(spec, 9);
  EXPECT_EQ(px.row % 3, 0u);
  EXPECT_EQ(px.col % 3, 0u);
  EXPECT_LT(px.channel, 3u);
}

TEST(Trace, FactorOneHasNoAuxPartner) {
  auto spec = make_spec(1);
  model::ResNet<double> net(tiny_net(3), 0);
  std::mt19937_64 rng(3);
  const auto x = random_tensor<double>({1, 3, 4, 4}, rng, 0.0, 1.0);
  train::calibrate_batchnorm(net, x);
  EXPECT_THROW(trace_attack(net, x, 0, attacks::AttackSpec::defaults(Kind::pgd), spec), ValueError);
}

TEST_F(TraceFixture, RecoveryReportsCoverTheRequestedSamples) {
  const auto attack = attacks::AttackSpec::defaults(Kind::pgd, 8.0 / 255.0, spec.default_box());
  const auto reports = recovery_reports(*net, ds, spec, attack, 5, 2);
  ASSERT_EQ(reports.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(reports[i].recovered, reports[i].pred_projected == reports[i].pred_clean);
    EXPECT_GE(reports[i].loss_adv, reports[i].loss_clean - 1e-12);
  }
  const auto c = gradient_concentration(*net, ds, spec, 6, 4);
  EXPECT_GT(c.aux_mean + c.sig_mean, 0.0);
}

TEST(Recovery, MedianDropRatio) {
  auto rep = [](double c, double a, double p) {
    RecoveryReport r;
    r.loss_clean = c, r.loss_adv = a, r.loss_projected = p;
    return r;
  };
  EXPECT_DOUBLE_EQ(median_drop_ratio({rep(1, 2, 1), rep(1, 3, 2), rep(1, 5, 4)}), 0.5);
  // Samples where the attack did not raise the loss are left out.
  EXPECT_DOUBLE_EQ(median_drop_ratio({rep(1, 2, 1.5), rep(1, 1, 0)}), 0.5);
  EXPECT_TRUE(std::isnan(median_drop_ratio({rep(1, 1, 1)})));
}

TEST(Tables, ColumnsAndAverages) {
  const auto& cols = table_columns();
  ASSERT_EQ(cols.size(), 5u);
  EXPECT_EQ(column_name(cols[1]), "AutoAttack");
  EXPECT_FALSE(column_attack(Column::autoattack).has_value());
  EXPECT_FALSE(column_attack(Column::apgdt).has_value());
  EXPECT_EQ(column_attack(Column::bim), Kind::bim);
  const std::vector<std::pair<Kind, double>> r{{Kind::pgd, 10.0}, {Kind::bim, 40.0}, {Kind::apgd, 25.0}};
  EXPECT_DOUBLE_EQ(mean_of(r), 25.0);
  ResultRow row;
  row.robust = r;
  EXPECT_EQ(row.robust_for(Kind::bim), 40.0);
  row.robust.pop_back();
  EXPECT_FALSE(row.robust_for(Kind::apgd).has_value());
}

TEST(Tables, AttackPlanOverrides) {
  AttackPlan plan;
  plan.pgd_steps = 5;
  plan.pgd_alpha = 1.0 / 255.0;
  plan.seed = 11;
  const auto p = plan.spec_for(Kind::pgd, {-0.2, 1.0});
  EXPECT_EQ(p.steps, 5);
  EXPECT_DOUBLE_EQ(p.alpha, 1.0 / 255.0);
  EXPECT_EQ(p.seed, 11u);
  EXPECT_EQ(p.box, (sbde::Box{-0.2, 1.0}));
  EXPECT_EQ(plan.spec_for(Kind::bim, {}).steps, 10);
}

TEST_F(TraceFixture, RobustnessRowsHaveConsistentAverages) {
  AttackPlan plan;
  plan.pgd_steps = 3;
  const auto rows = robustness_rows(*net, "SBDE", ds, plan, spec, 5);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].projection, "without");
  EXPECT_EQ(rows[1].projection, "with");
  for (const auto& r : rows) {
    EXPECT_EQ(r.clean, rows[0].clean);
    ASSERT_EQ(r.robust.size(), 3u);
    EXPECT_NEAR(r.average, mean_of(r.robust), 1e-6);
    for (const auto& [k, v] : r.robust) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 100.0);
    }
  }
}

TEST(Ablation, AggregatesUseMeanAndEntrywiseMin) {
  auto cell = [](const char* seed, double clean, double pgd, double bim) {
    AblationCell c;
    c.factor = 5;
    c.stride = 2;
    c.seed = seed;
    c.clean = clean;
    c.robust = {{Kind::pgd, pgd}, {Kind::bim, bim}};
    c.average = (pgd + bim) / 2;
    return c;
  };
  const std::vector<AblationCell> cells{cell("0", 90, 10, 40), cell("1", 80, 30, 20), cell("2", 85, 20, 30)};
  const auto mean = aggregate_cells(cells, false);
  EXPECT_EQ(mean.seed, "mean");
  EXPECT_DOUBLE_EQ(mean.clean, 85.0);
  EXPECT_DOUBLE_EQ(mean.robust[0].second, 20.0);
  EXPECT_NEAR(mean.average, mean_of(mean.robust), 1e-12);
  const auto mn = aggregate_cells(cells, true);
  EXPECT_EQ(mn.seed, "min");
  EXPECT_DOUBLE_EQ(mn.clean, 80.0);
  EXPECT_DOUBLE_EQ(mn.robust[0].second, 10.0);
  EXPECT_DOUBLE_EQ(mn.robust[1].second, 20.0);
  EXPECT_NEAR(mn.average, mean_of(mn.robust), 1e-12);
}

TEST(Ablation, GridValidation) {
  AblationGrid g;
  EXPECT_THROW(g.validate(), ConfigError);
  g.factors = {4};
  g.strides = {2};
  g.fills = {sbde::FillScheme::constant(0.0)};
  EXPECT_NO_THROW(g.validate());
  g.seeds.clear();
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(Ablation, SweepProducesSeedCellsThenAggregates) {
  data::SyntheticSpec s;
  s.classes = 2;
  s.per_class = 6;
  s.height = s.width = 4;
  const auto train_set = data::make_synthetic(s);
  s.seed = 1;
  s.per_class = 3;
  const auto test_set = data::make_synthetic(s, data::Split::test);
  AblationGrid g;
  g.factors = {2};
  g.strides = {1, 2};
  g.fills = {sbde::FillScheme::constant(0.0)};
  g.seeds = {0, 1};
  AblationSetup setup;
  setup.net = tiny_net(2);
  setup.train.epochs = 1;
  setup.train.batch = 6;
  setup.train.crop_padding = 1;
  setup.attack.kinds = {Kind::pgd};
  setup.attack.pgd_steps = 2;
  std::size_t seen = 0;
  const auto cells = ablation_sweep<float>(g, train_set, test_set, setup, [&](const AblationCell&) { ++seen; });
  ASSERT_EQ(cells.size(), 2u * 2u + 2u * 2u);
  EXPECT_EQ(seen, 4u);
  EXPECT_EQ(cells[0].seed, "0");
  EXPECT_EQ(cells[0].stride, 1u);
  for (const auto& c : cells) EXPECT_NEAR(c.average, mean_of(c.robust), 1e-6);
  std::size_t aggregates = 0;
  for (const auto& c : cells) aggregates += c.seed == "mean" || c.seed == "min";
  EXPECT_EQ(aggregates, 4u);
  // Same inputs, same cells.
  const auto again = ablation_sweep<float>(g, train_set, test_set, setup);
  for (std::size_t i = 0; i < cells.size(); ++i) EXPECT_EQ(again[i].average, cells[i].average);
}

}  // namespace
