#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "landscape/tape.hpp"

namespace landscape {

// Running statistics of a batchnorm layer. `initialized` turns true after the
// first training-mode forward pass.
template <typename T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  bool initialized = false;
  T momentum = T(0.1);
  T eps = T(1e-5);

  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean(channels, T{0}), running_var(channels, T{1}) {}
};

enum class Reduction { mean, sum };

// Cross-correlation of x[N,C,H,W] with w[K,C,kh,kw] plus optional bias[K].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias, std::size_t stride,
              std::size_t padding);

template <typename T>
Var<T> relu(const Var<T>& x);

// x[N,D] * W[K,D]^T + b[K].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);

// Per-channel normalization of x[N,C,H,W]. Training mode normalizes by batch
// statistics and updates `stats`; eval mode uses the running statistics and
// throws StateError if no training pass has initialized them.
template <typename T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T>& stats,
                   bool training);

// [N,C,H,W] -> [N,C].
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

// Elementwise sum of same-shape tensors (residual join).
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> scale(const Var<T>& x, T factor);

// Fixed per-channel affine map y = (x - shift[c]) * mult[c]; differentiable in
// x only.
template <typename T>
Var<T> channel_affine(const Var<T>& x, std::span<const T> shift, std::span<const T> mult);

// Softmax cross-entropy of logits[N,K] against integer labels. Scalar output.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels, Reduction reduction = Reduction::mean);

// Sum of all elements, scalar output.
template <typename T>
Var<T> sum(const Var<T>& x);

// Elementwise square.
template <typename T>
Var<T> square(const Var<T>& x);

// Non-differentiable helpers on plain tensors.
template <typename T>
std::vector<T> per_sample_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

template <typename T>
std::vector<T> softmax_row(std::span<const T> logits);

// argmax per row; ties resolve to the lowest index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits);

}  // namespace landscape
