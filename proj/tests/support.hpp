#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "landscape/model.hpp"
#include "landscape/ops.hpp"
#include "landscape/tensor.hpp"

namespace landscape::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(u(rng));
  return t;
}

inline std::vector<int> random_labels(std::size_t n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, classes - 1);
  std::vector<int> out(n);
  for (auto& y : out) y = u(rng);
  return out;
}

// Two one-block stages on a 3x3 stride-1 stem; small enough for exhaustive
// finite differences.
inline model::NetConfig tiny_net(std::size_t classes = 3, std::size_t in_channels = 3) {
  model::NetConfig c;
  c.stem = model::StemConfig{3, 1, 1, 4};
  c.stages = {{1, 4}, {1, 6}};
  c.num_classes = classes;
  c.in_channels = in_channels;
  return c;
}

// Affine classifier logits = W vec(x) + b, written as a full-size
// convolution so it runs on the same tape machinery as the ResNet.
template <typename T>
class LinearNet : public model::Classifier<T> {
 public:
  LinearNet(Tensor<T> weight, Tensor<T> bias) : weight_(std::move(weight)), bias_(std::move(bias)) {}

  Var<T> logits(Tape<T>& tape, const Var<T>& x) override {
    Var<T> y = conv2d<T>(x, tape.constant(weight_), tape.constant(bias_), 1, 0);
    return global_avg_pool<T>(y);
  }

 private:
  Tensor<T> weight_;  // [K, C, H, W]
  Tensor<T> bias_;    // [K]
};

}  // namespace landscape::testing
