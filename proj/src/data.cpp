#include "landscape/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "landscape/error.hpp"

namespace landscape::data {

namespace fs = std::filesystem;

void Dataset::validate() const {
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw ShapeError("dataset images " + to_string(images.shape()) + " do not match " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw ValueError("label " + std::to_string(y) + " out of range");
  }
  for (float v : images.values()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ValueError("pixel value outside [0, 1]");
  }
}

template <typename T>
Tensor<T> gather_images(const Dataset& ds, std::span<const std::size_t> indices) {
  const std::size_t plane = ds.channels() * ds.height() * ds.width();
  Tensor<T> out({indices.size(), ds.channels(), ds.height(), ds.width()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const float* src = ds.images.data() + indices[i] * plane;
    std::copy(src, src + plane, out.data() + i * plane);
  }
  return out;
}

template Tensor<float> gather_images<float>(const Dataset&, std::span<const std::size_t>);
template Tensor<double> gather_images<double>(const Dataset&, std::span<const std::size_t>);

std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> indices) {
  std::vector<int> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = ds.labels.at(indices[i]);
  return out;
}

Dataset select(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.images = gather_images<float>(ds, indices);
  out.labels = gather_labels(ds, indices);
  out.split = ds.split;
  out.num_classes = ds.num_classes;
  return out;
}

Dataset load_cifar10_binary(const std::vector<fs::path>& paths, Split split) {
  std::vector<std::uint8_t> bytes;
  for (const auto& path : paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open CIFAR-10 file " + path.string());
    std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (file.size() % kCifarRecordBytes != 0) {
      throw FormatError("CIFAR-10 file " + path.string() + " has length " + std::to_string(file.size()) +
                        ", not a multiple of " + std::to_string(kCifarRecordBytes));
    }
    bytes.insert(bytes.end(), file.begin(), file.end());
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  Dataset ds;
  ds.split = split;
  ds.num_classes = 10;
  ds.images = Tensor<float>({n, 3, 32, 32});
  ds.labels.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[0] > 9) {
      throw FormatError("CIFAR-10 record " + std::to_string(r) + " has label byte " + std::to_string(rec[0]));
    }
    ds.labels[r] = rec[0];
    float* dst = ds.images.data() + r * 3072;
    for (std::size_t p = 0; p < 3072; ++p) dst[p] = static_cast<float>(rec[1 + p]) / 255.0f;
  }
  return ds;
}

std::vector<std::uint8_t> encode_cifar10_binary(const Dataset& ds) {
  if (ds.channels() != 3 || ds.height() != 32 || ds.width() != 32) {
    throw ShapeError("CIFAR-10 records need 3x32x32 images, got " + to_string(ds.images.shape()));
  }
  std::vector<std::uint8_t> out(ds.size() * kCifarRecordBytes);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    std::uint8_t* rec = out.data() + r * kCifarRecordBytes;
    if (ds.labels[r] < 0 || ds.labels[r] > 9) throw ValueError("label not encodable as a CIFAR-10 byte");
    rec[0] = static_cast<std::uint8_t>(ds.labels[r]);
    const float* src = ds.images.data() + r * 3072;
    for (std::size_t p = 0; p < 3072; ++p) {
      rec[1 + p] = static_cast<std::uint8_t>(std::lround(std::clamp(src[p], 0.0f, 1.0f) * 255.0f));
    }
  }
  return out;
}

void save_cifar10_binary(const Dataset& ds, const fs::path& path) {
  const auto bytes = encode_cifar10_binary(ds);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

CifarFiles find_cifar10(const fs::path& root) {
  CifarFiles files;
  for (const fs::path& dir : {root, root / "cifar-10-batches-bin"}) {
    std::vector<fs::path> train;
    for (int b = 1; b <= 5; ++b) {
      const fs::path p = dir / ("data_batch_" + std::to_string(b) + ".bin");
      if (fs::exists(p)) train.push_back(p);
    }
    const fs::path test = dir / "test_batch.bin";
    if (train.size() == 5 && fs::exists(test)) {
      files.train = train;
      files.test = {test};
      return files;
    }
  }
  return files;
}

void SyntheticSpec::validate() const {
  if (classes < 2) throw ValueError("synthetic data needs at least 2 classes");
  if (per_class == 0 || channels == 0 || height == 0 || width == 0) {
    throw ValueError("synthetic data needs non-empty geometry");
  }
  if (!(noise >= 0.0)) throw ValueError("synthetic noise must be >= 0");
}

Tensor<float> synthetic_template(const SyntheticSpec& spec, int label) {
  spec.validate();
  const std::size_t c = spec.channels;
  const std::size_t h = spec.height;
  const std::size_t w = spec.width;
  Tensor<float> t({c, h, w});
  const double pi = std::numbers::pi;
  if (spec.pattern == Pattern::gratings) {
    // Orientation encodes the class; channels differ in phase.
    const double theta = pi * label / spec.classes;
    const double cycles = 3.0;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double u = (static_cast<double>(x) * std::cos(theta) + static_cast<double>(y) * std::sin(theta)) /
                           static_cast<double>(std::max(h, w));
          const double v = 0.5 + 0.3 * std::cos(2.0 * pi * cycles * u + ch * pi / 3.0);
          t[(ch * h + y) * w + x] = static_cast<float>(v);
        }
      }
    }
  } else {
    // Three Gaussian blobs per class at positions fixed by the class index.
    std::mt19937_64 rng(0x5bd1e995ULL + static_cast<std::uint64_t>(label));
    std::uniform_real_distribution<double> pos(0.15, 0.85);
    std::uniform_real_distribution<double> amp(0.2, 0.45);
    struct Blob {
      double y, x, a;
    };
    std::vector<Blob> blobs;
    for (int b = 0; b < 3; ++b) blobs.push_back({pos(rng) * h, pos(rng) * w, amp(rng)});
    const double sigma = 0.12 * static_cast<double>(std::max(h, w));
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          double v = 0.2;
          for (std::size_t b = 0; b < blobs.size(); ++b) {
            const double dy = static_cast<double>(y) - blobs[b].y;
            const double dx = static_cast<double>(x) - blobs[b].x;
            const double gain = (b + ch) % c == 0 ? 1.0 : 0.6;
            v += gain * blobs[b].a * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
          }
          t[(ch * h + y) * w + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  return t;
}

Dataset make_synthetic(const SyntheticSpec& spec, Split split) {
  spec.validate();
  const std::size_t k = static_cast<std::size_t>(spec.classes);
  const std::size_t n = k * spec.per_class;
  const std::size_t plane = spec.channels * spec.height * spec.width;
  std::vector<Tensor<float>> templates;
  for (int y = 0; y < spec.classes; ++y) templates.push_back(synthetic_template(spec, y));

  Dataset ds;
  ds.split = split;
  ds.num_classes = spec.classes;
  ds.images = Tensor<float>({n, spec.channels, spec.height, spec.width});
  ds.labels.resize(n);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % k);
    ds.labels[i] = y;
    float* dst = ds.images.data() + i * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const double v = templates[y][p] + spec.noise * gauss(rng);
      dst[p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return ds;
}

namespace {

// Per-class shuffled index pools, each drawn from the same seeded stream.
std::vector<std::vector<std::size_t>> class_pools(const Dataset& ds, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> pools(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) pools.at(ds.labels[i]).push_back(i);
  std::mt19937_64 rng(seed);
  for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);
  return pools;
}

// Class c receives n / K samples, plus one if c < n mod K.
std::size_t share(std::size_t n, std::size_t k, std::size_t c) { return n / k + (c < n % k ? 1 : 0); }

}  // namespace

std::pair<Dataset, Dataset> subsample(const Dataset& ds, std::size_t n_train, std::size_t n_test,
                                      std::uint64_t seed) {
  if (n_train + n_test > ds.size()) {
    throw ValueError("cannot draw " + std::to_string(n_train + n_test) + " samples from " +
                     std::to_string(ds.size()));
  }
  const auto pools = class_pools(ds, seed);
  const std::size_t k = pools.size();
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t a = share(n_train, k, c);
    const std::size_t b = share(n_test, k, c);
    if (a + b > pools[c].size()) {
      throw ValueError("class " + std::to_string(c) + " has " + std::to_string(pools[c].size()) +
                       " samples, cannot stratify " + std::to_string(a + b));
    }
    train_idx.insert(train_idx.end(), pools[c].begin(), pools[c].begin() + a);
    test_idx.insert(test_idx.end(), pools[c].begin() + a, pools[c].begin() + a + b);
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  Dataset train = select(ds, train_idx);
  Dataset test = select(ds, test_idx);
  train.split = Split::train;
  test.split = Split::test;
  return {std::move(train), std::move(test)};
}

Dataset stratified_subset(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  auto parts = subsample(ds, n, 0, seed);
  parts.first.split = ds.split;
  return std::move(parts.first);
}

ChannelStats channel_stats(const Dataset& ds) {
  const std::size_t c = ds.channels();
  const std::size_t hw = ds.height() * ds.width();
  ChannelStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  const double count = static_cast<double>(ds.size() * hw);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const float* p = ds.images.data() + (i * c + ch) * hw;
      for (std::size_t q = 0; q < hw; ++q) acc += p[q];
    }
    const double mean = acc / count;
    double sq = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const float* p = ds.images.data() + (i * c + ch) * hw;
      for (std::size_t q = 0; q < hw; ++q) sq += (p[q] - mean) * (p[q] - mean);
    }
    s.mean[ch] = mean;
    s.stddev[ch] = std::max(std::sqrt(sq / count), 1e-6);
  }
  return s;
}

}  // namespace landscape::data
