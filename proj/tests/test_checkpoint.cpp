#include <gtest/gtest.h>

#include <fstream>

#include "landscape/checkpoint.hpp"
#include "landscape/error.hpp"
#include "landscape/train.hpp"
#include "support.hpp"

namespace {

using namespace landscape;
using landscape::testing::random_tensor;
using landscape::testing::tiny_net;
namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "landscape_test_ckpt";
  fs::create_directories(dir);
  return dir / name;
}

struct Fixture : ::testing::Test {
  model::ResNet<float> net{tiny_net(3), 7};
  Tensor<float> x;
  sbde::ExpansionSpec spec;

  void SetUp() override {
    std::mt19937_64 rng(1);
    x = random_tensor<float>({3, 3, 6, 6}, rng, 0.0, 1.0);
    train::calibrate_batchnorm(net, x);
    net.set_normalization({0.4, 0.5, 0.6}, {0.2, 0.25, 0.3});
    spec.factor = 2;
    spec.fill = sbde::FillScheme::constant(0.3);
    spec.height = spec.width = 3;
  }
};

TEST_F(Fixture, RoundTripRestoresPredictionsExactly) {
  const fs::path p = scratch("rt.lpck");
  checkpoint::save(p, net, spec, "note text");
  checkpoint::Header h;
  auto back = checkpoint::load<float>(p, &h);
  EXPECT_EQ(h.net, net.config());
  EXPECT_EQ(h.sbde, std::optional<sbde::ExpansionSpec>(spec));
  EXPECT_EQ(h.dtype, "f32");
  EXPECT_EQ(h.note, "note text");
  const auto pa = net.parameters();
  const auto pb = back.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->tensor, pb[i]->tensor) << pa[i]->name;
  Tape<float> t0, t1;
  EXPECT_EQ(net.logits(t0, t0.constant(x)).value(), back.logits(t1, t1.constant(x)).value());
  EXPECT_EQ(checkpoint::read_header(p).note, "note text");
}

TEST_F(Fixture, NaturalModelHasNoExpansion) {
  const fs::path p = scratch("natural.lpck");
  checkpoint::save(p, net, std::nullopt);
  EXPECT_FALSE(checkpoint::read_header(p).sbde.has_value());
}

TEST_F(Fixture, WrongDtypeIsRejected) {
  const fs::path p = scratch("dtype.lpck");
  checkpoint::save(p, net, spec);
  EXPECT_THROW(checkpoint::load<double>(p), FormatError);
}

TEST_F(Fixture, TruncationAndTrailingBytesAreRejected) {
  const fs::path p = scratch("cut.lpck");
  checkpoint::save(p, net, spec);
  const auto size = fs::file_size(p);
  fs::resize_file(p, size - 3);
  EXPECT_THROW(checkpoint::load<float>(p), FormatError);
  checkpoint::save(p, net, spec);
  {
    std::ofstream out(p, std::ios::binary | std::ios::app);
    out << "xx";
  }
  EXPECT_THROW(checkpoint::load<float>(p), FormatError);
}

TEST_F(Fixture, BadMagicAndMissingFile) {
  const fs::path p = scratch("magic.lpck");
  {
    std::ofstream out(p, std::ios::binary);
    out << "NOPE0000000000000000";
  }
  EXPECT_THROW(checkpoint::read_header(p), FormatError);
  EXPECT_THROW(checkpoint::read_header(scratch("absent.lpck")), FormatError);
}

}  // namespace
