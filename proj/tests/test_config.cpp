#include <gtest/gtest.h>

#include "landscape/config.hpp"
#include "landscape/error.hpp"

namespace {

using namespace landscape;
using namespace landscape::config;

const char* kDesk = R"(# desk run
[data]
source = synthetic
classes = 4
train_per_class = 20
test_per_class = 5
height = 8
width = 8

[model]
stem_kernel = 3
stem_stride = 1
stem_padding = 1
stem_channels = 8
stages = 1x8,1x16

[sbde]
factor = 3
fill = gapcycle:0.2

[train]
epochs = 2
lr = 0.05

[attack]
kinds = pgd,apgd
epsilon = 8/255
)";

int error_line(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

TEST(Parse, ReadsSectionsAndDerivesGeometry) {
  const RunConfig c = parse(kDesk);
  EXPECT_EQ(c.data.synthetic.classes, 4);
  EXPECT_EQ(c.net.num_classes, 4u);
  EXPECT_EQ(c.net.stem.out_channels, 8u);
  ASSERT_TRUE(c.sbde.has_value());
  EXPECT_EQ(c.sbde->factor, 3u);
  EXPECT_EQ(c.sbde->height, 8u);
  EXPECT_EQ(c.sbde->fill, sbde::FillScheme::gap_cycle(0.2));
  EXPECT_EQ(c.train.epochs, 2u);
  EXPECT_DOUBLE_EQ(c.attack.plan.epsilon, 8.0 / 255.0);
  EXPECT_EQ(c.attack.plan.kinds, (std::vector<attacks::Kind>{attacks::Kind::pgd, attacks::Kind::apgd}));
}

TEST(Parse, NoSbdeSectionMeansNaturalBaseline) {
  EXPECT_FALSE(parse("[data]\nclasses = 3\n").sbde.has_value());
  EXPECT_TRUE(parse("[sbde]\n").sbde.has_value());
}

TEST(Parse, ErrorsCarryTheLineNumber) {
  EXPECT_EQ(error_line("[data]\nclasses = 3\nbogus = 1\n"), 3);
  EXPECT_EQ(error_line("[data]\nclasses = 3\n\nclasses = 4\n"), 4);
  EXPECT_EQ(error_line("# c\n[nowhere]\n"), 2);
  EXPECT_EQ(error_line("classes = 3\n"), 1);
  EXPECT_EQ(error_line("[train]\nepochs = many\n"), 2);
  EXPECT_EQ(error_line("[train]\n\nlr = 0.1\nmomentum = 1.5\n"), 4);
  EXPECT_EQ(error_line("[data\n"), 1);
  EXPECT_EQ(error_line("[model]\njust text\n"), 2);
}

TEST(Parse, ScalePresetDoesNotOverrideExplicitKeys) {
  const RunConfig c = parse("[model]\nstem_channels = 16\nscale = full\n");
  EXPECT_EQ(c.net.stem.out_channels, 16u);
  EXPECT_EQ(c.net.stages.size(), 4u);
}

TEST(Canonical, RoundTripsAndIsStable) {
  RunConfig c = parse(kDesk);
  c.probe.pixel = probe::TrackedPixel{1, 3, 6};
  c.attack.plan.pgd_steps = 7;
  const std::string text = canonical(c);
  const RunConfig back = parse(text);
  EXPECT_EQ(canonical(back), text);
  EXPECT_EQ(back.attack.plan.epsilon, c.attack.plan.epsilon);
  EXPECT_EQ(back.probe.pixel->col, 6u);
  EXPECT_EQ(canonical(parse(canonical(RunConfig{}))), canonical(RunConfig{}));
}

TEST(Canonical, MentionsEveryKey) {
  RunConfig c = parse(kDesk);
  c.attack.plan.pgd_steps = 20;
  c.attack.plan.pgd_alpha = 2.0 / 255.0;
  const std::string text = canonical(c);
  for (const auto& k : keys()) {
    const std::string name = k.substr(k.find('.') + 1);
    EXPECT_NE(text.find("\n" + name + " = "), std::string::npos) << k;
  }
}

TEST(Seeds, SetSeedReachesModelTrainAndAttack) {
  RunConfig c;
  c.set_seed(5);
  EXPECT_EQ(c.model_seed, 5u);
  EXPECT_EQ(c.train.seed, 5u);
  EXPECT_EQ(c.attack.plan.seed, 5u);
}

TEST(Numbers, FractionsAndDecimals) {
  EXPECT_DOUBLE_EQ(parse_real("8/255"), 8.0 / 255.0);
  EXPECT_DOUBLE_EQ(parse_real("0.25"), 0.25);
  EXPECT_THROW(parse_real("1/0"), ValueError);
  EXPECT_THROW(parse_real("x"), ValueError);
}

TEST(Load, MissingFileIsAConfigError) {
  EXPECT_THROW(load("/nonexistent/run.ini"), ConfigError);
}

}  // namespace
