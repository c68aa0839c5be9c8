#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "landscape/data.hpp"
#include "landscape/error.hpp"

namespace {

using namespace landscape;
using namespace landscape::data;
namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "landscape_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Single-pixel images whose value encodes the sample index, so a draw can be
// traced back to its source.
Dataset indexed(std::size_t n, int classes) {
  Dataset ds;
  ds.num_classes = classes;
  ds.images = Tensor<float>({n, 1, 1, 1});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.images[i] = static_cast<float>(i) / static_cast<float>(n);
    ds.labels[i] = static_cast<int>((i * 7) % static_cast<std::size_t>(classes));
  }
  return ds;
}

std::size_t index_of(const Dataset& ds, std::size_t k, std::size_t n) {
  return static_cast<std::size_t>(std::lround(ds.images[k] * static_cast<float>(n)));
}

TEST(Cifar, RecordArithmetic) {
  EXPECT_EQ(kCifarRecordBytes, 1u + 3u * 32u * 32u);
  EXPECT_EQ(10000u * kCifarRecordBytes, 30730000u);
}

TEST(Cifar, DecodesLabelAndChannelPlanes) {
  std::vector<std::uint8_t> rec(kCifarRecordBytes, 0);
  rec[0] = 7;
  rec[1] = 255;                     // red (0,0)
  rec[1 + 1024 + 33] = 51;          // green (1,1)
  rec[1 + 2048 + 1023] = 128;       // blue (31,31)
  const fs::path p = scratch("one.bin");
  write_bytes(p, rec);
  const Dataset ds = load_cifar10_binary({p}, Split::test);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.labels[0], 7);
  EXPECT_EQ(ds.split, Split::test);
  EXPECT_EQ(ds.images.shape(), (Shape{1, 3, 32, 32}));
  EXPECT_EQ(ds.images[0], 1.0f);
  EXPECT_EQ(ds.images[1024 + 33], 51.0f / 255.0f);
  EXPECT_EQ(ds.images[2048 + 1023], 128.0f / 255.0f);
  EXPECT_EQ(ds.images[1], 0.0f);
}

TEST(Cifar, TruncatedFileIsAFormatError) {
  std::vector<std::uint8_t> bytes(2 * kCifarRecordBytes - 5, 0);
  const fs::path p = scratch("short.bin");
  write_bytes(p, bytes);
  EXPECT_THROW(load_cifar10_binary({p}), FormatError);
}

TEST(Cifar, BadLabelByteIsAFormatError) {
  std::vector<std::uint8_t> rec(kCifarRecordBytes, 0);
  rec[0] = 10;
  const fs::path p = scratch("label.bin");
  write_bytes(p, rec);
  EXPECT_THROW(load_cifar10_binary({p}), FormatError);
}

TEST(Cifar, MissingFileIsAFormatError) {
  EXPECT_THROW(load_cifar10_binary({scratch("absent.bin")}), FormatError);
}

TEST(Cifar, EncodeDecodeRoundTripsBytes) {
  std::mt19937_64 rng(1);
  std::vector<std::uint8_t> bytes(3 * kCifarRecordBytes);
  for (std::size_t r = 0; r < 3; ++r) {
    bytes[r * kCifarRecordBytes] = static_cast<std::uint8_t>(rng() % 10);
    for (std::size_t k = 1; k < kCifarRecordBytes; ++k) bytes[r * kCifarRecordBytes + k] = rng() & 0xff;
  }
  const fs::path p = scratch("rt.bin");
  write_bytes(p, bytes);
  const Dataset ds = load_cifar10_binary({p});
  EXPECT_EQ(encode_cifar10_binary(ds), bytes);
  const fs::path q = scratch("rt2.bin");
  save_cifar10_binary(ds, q);
  EXPECT_EQ(load_cifar10_binary({q}).images, ds.images);
}

TEST(Cifar, FindReportsIncompleteDirectories) {
  const fs::path dir = scratch("cifar_dir") / "cifar-10-batches-bin";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_bytes(dir / "test_batch.bin", std::vector<std::uint8_t>(kCifarRecordBytes, 0));
  auto files = find_cifar10(dir.parent_path());
  EXPECT_FALSE(files.complete());
  for (int b = 1; b <= 5; ++b) {
    write_bytes(dir / ("data_batch_" + std::to_string(b) + ".bin"), std::vector<std::uint8_t>(kCifarRecordBytes, 0));
  }
  files = find_cifar10(dir.parent_path());
  EXPECT_TRUE(files.complete());
}

TEST(Synthetic, DeterministicAndInRange) {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.per_class = 5;
  spec.height = spec.width = 8;
  spec.seed = 9;
  const Dataset a = make_synthetic(spec);
  const Dataset b = make_synthetic(spec);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NO_THROW(a.validate());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.labels[i], static_cast<int>(i % 4));
  spec.seed = 10;
  EXPECT_NE(make_synthetic(spec).images, a.images);
}

TEST(Synthetic, NoiseFreeSamplesAreTheirTemplates) {
  for (auto pattern : {Pattern::gratings, Pattern::blobs}) {
    SyntheticSpec spec;
    spec.classes = 10;
    spec.per_class = 3;
    spec.noise = 0.0;
    spec.pattern = pattern;
    const Dataset ds = make_synthetic(spec);
    std::vector<Tensor<float>> templates;
    for (int y = 0; y < spec.classes; ++y) templates.push_back(synthetic_template(spec, y));
    // Nearest-template classification is exact.
    const std::size_t plane = spec.channels * spec.height * spec.width;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      int best = -1;
      double best_d = 0.0;
      for (int y = 0; y < spec.classes; ++y) {
        double d = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
          const double e = ds.images[i * plane + p] - templates[y][p];
          d += e * e;
        }
        if (best < 0 || d < best_d) best = y, best_d = d;
      }
      correct += best == ds.labels[i];
    }
    EXPECT_EQ(correct, ds.size());
  }
}

TEST(Synthetic, TemplatesAreDistinct) {
  SyntheticSpec spec;
  for (int a = 0; a < spec.classes; ++a) {
    for (int b = a + 1; b < spec.classes; ++b) EXPECT_NE(synthetic_template(spec, a), synthetic_template(spec, b));
  }
}

TEST(Synthetic, RejectsBadSpecs) {
  SyntheticSpec spec;
  spec.classes = 1;
  EXPECT_THROW(make_synthetic(spec), ValueError);
  spec.classes = 3;
  spec.noise = -1.0;
  EXPECT_THROW(make_synthetic(spec), ValueError);
}

TEST(Dataset, ValidateCatchesRangeErrors) {
  Dataset ds = indexed(4, 2);
  EXPECT_NO_THROW(ds.validate());
  ds.labels[1] = 2;
  EXPECT_THROW(ds.validate(), ValueError);
  ds.labels[1] = 0;
  ds.images[0] = 1.5f;
  EXPECT_THROW(ds.validate(), ValueError);
}

TEST(Subsample, StratifiedDisjointAndDeterministic) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 5);
    const std::size_t n = static_cast<std::size_t>(k) * (4 + rng() % 10);
    const Dataset ds = indexed(n, k);
    const std::size_t n_train = rng() % (n / 2 + 1);
    const std::size_t n_test = rng() % (n / 3 + 1);
    const std::uint64_t seed = rng();
    std::pair<Dataset, Dataset> parts;
    try {
      parts = subsample(ds, n_train, n_test, seed);
    } catch (const ValueError&) {
      continue;  // a class could not supply its share
    }
    const auto& [tr, te] = parts;
    ASSERT_EQ(tr.size(), n_train);
    ASSERT_EQ(te.size(), n_test);
    std::set<std::size_t> seen;
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const std::size_t src = index_of(tr, i, n);
      ASSERT_EQ(tr.labels[i], ds.labels[src]);
      ASSERT_TRUE(seen.insert(src).second);
      if (i) ASSERT_LT(index_of(tr, i - 1, n), src);
    }
    for (std::size_t i = 0; i < te.size(); ++i) {
      const std::size_t src = index_of(te, i, n);
      ASSERT_EQ(te.labels[i], ds.labels[src]);
      ASSERT_TRUE(seen.insert(src).second) << "train and test overlap";
    }
    // Per-class counts differ by at most one.
    std::vector<std::size_t> count(k, 0);
    for (int y : tr.labels) ++count[y];
    const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
    ASSERT_LE(*hi - *lo, 1u);
    const auto again = subsample(ds, n_train, n_test, seed);
    ASSERT_EQ(again.first.images, tr.images);
    ASSERT_EQ(again.second.images, te.images);
  }
}

TEST(Subsample, TooManySamplesIsAnError) {
  const Dataset ds = indexed(10, 2);
  EXPECT_THROW(subsample(ds, 8, 3, 0), ValueError);
  EXPECT_THROW(stratified_subset(ds, 11, 0), ValueError);
}

TEST(Gather, SelectsInOrder) {
  const Dataset ds = indexed(6, 3);
  const std::vector<std::size_t> idx{4, 1};
  const auto x = gather_images<double>(ds, idx);
  EXPECT_EQ(x.shape(), (Shape{2, 1, 1, 1}));
  EXPECT_EQ(x[0], static_cast<double>(ds.images[4]));
  EXPECT_EQ(gather_labels(ds, idx), (std::vector<int>{ds.labels[4], ds.labels[1]}));
}

TEST(Stats, ChannelMeanAndStddev) {
  Dataset ds;
  ds.num_classes = 2;
  ds.images = Tensor<float>({2, 2, 1, 2}, std::vector<float>{0.0f, 1.0f, 0.5f, 0.5f, 1.0f, 0.0f, 0.5f, 0.5f});
  ds.labels = {0, 1};
  const auto s = channel_stats(ds);
  EXPECT_DOUBLE_EQ(s.mean[0], 0.5);
  EXPECT_DOUBLE_EQ(s.mean[1], 0.5);
  EXPECT_NEAR(s.stddev[0], 0.5, 1e-12);
  EXPECT_EQ(s.stddev[1], 1e-6);  // floored to keep normalization finite
}

}  // namespace
