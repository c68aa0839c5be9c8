#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "landscape/tensor.hpp"

namespace landscape::data {

enum class Split { train, test };

// Images in [0,1], NCHW, stored in single precision.
struct Dataset {
  Tensor<float> images;
  std::vector<int> labels;
  Split split = Split::train;
  int num_classes = 10;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t channels() const { return images.dim(1); }
  std::size_t height() const { return images.dim(2); }
  std::size_t width() const { return images.dim(3); }

  // Throws ValueError if a label or pixel is out of range.
  void validate() const;
};

// Copies the selected samples, converted to T, into one [n,C,H,W] batch.
template <typename T>
Tensor<T> gather_images(const Dataset& ds, std::span<const std::size_t> indices);
std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> indices);

Dataset select(const Dataset& ds, std::span<const std::size_t> indices);

// CIFAR-10 binary batches: 3073-byte records, one label byte then 1024 red,
// 1024 green and 1024 blue bytes, each plane row-major 32x32.
inline constexpr std::size_t kCifarRecordBytes = 3073;
Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& paths, Split split = Split::train);
std::vector<std::uint8_t> encode_cifar10_binary(const Dataset& ds);
void save_cifar10_binary(const Dataset& ds, const std::filesystem::path& path);

// Locates data_batch_{1..5}.bin and test_batch.bin under `root` or
// `root/cifar-10-batches-bin`. Returns empty lists when absent.
struct CifarFiles {
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> test;
  bool complete() const { return train.size() == 5 && test.size() == 1; }
};
CifarFiles find_cifar10(const std::filesystem::path& root);

enum class Pattern { gratings, blobs };

struct SyntheticSpec {
  int classes = 10;
  std::size_t per_class = 100;
  std::size_t channels = 3;
  std::size_t height = 16;
  std::size_t width = 16;
  Pattern pattern = Pattern::gratings;
  double noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Noise-free class template [C,H,W]; depends only on the class and geometry.
Tensor<float> synthetic_template(const SyntheticSpec& spec, int label);

// Class templates plus seeded Gaussian noise, clamped to [0,1]. Samples are
// ordered class-interleaved: 0,1,...,K-1,0,1,...
Dataset make_synthetic(const SyntheticSpec& spec, Split split = Split::train);

// Disjoint class-stratified draws of n_train and n_test samples. Selected
// samples keep their original relative order. Throws ValueError when a class
// cannot supply its share.
std::pair<Dataset, Dataset> subsample(const Dataset& ds, std::size_t n_train, std::size_t n_test,
                                      std::uint64_t seed);

// Single stratified draw, same rules as subsample.
Dataset stratified_subset(const Dataset& ds, std::size_t n, std::uint64_t seed);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};
ChannelStats channel_stats(const Dataset& ds);

}  // namespace landscape::data
