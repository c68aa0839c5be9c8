#include "landscape/ops.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <memory>
#include <string>

#include "landscape/kernels.hpp"

namespace landscape {

namespace {

template <typename T>
bool any_requires(std::initializer_list<const Var<T>*> vars) {
  for (const Var<T>* v : vars) {
    if (v != nullptr && v->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void check_same_tape(const Var<T>& a, const Var<T>& b) {
  if (&a.tape() != &b.tape()) throw StateError("operands recorded on different tapes");
}

template <typename T>
void require_rank(const Var<T>& v, std::size_t rank, const char* op) {
  if (v.shape().size() != rank) {
    throw ShapeError(std::string(op) + " expects a rank-" + std::to_string(rank) + " tensor, got " +
                     to_string(v.shape()));
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const std::optional<Var<T>>& bias, std::size_t stride,
              std::size_t padding) {
  check_same_tape(x, w);
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4) {
    throw ShapeError("conv2d expects rank-4 input and weight, got " + to_string(xs) + " and " + to_string(ws));
  }
  if (stride == 0) throw ValueError("conv2d stride must be positive");
  if (ws[1] != xs[1]) {
    throw ShapeError("conv2d channel mismatch: input " + to_string(xs) + ", weight " + to_string(ws));
  }
  if (ws[2] > xs[2] + 2 * padding || ws[3] > xs[3] + 2 * padding) {
    throw ShapeError("conv2d kernel " + to_string(ws) + " larger than padded input " + to_string(xs));
  }
  if (bias && bias->shape() != Shape{ws[0]}) {
    throw ShapeError("conv2d bias must have shape [" + std::to_string(ws[0]) + "]");
  }

  kernels::ConvGeometry g;
  g.batch = xs[0];
  g.in_channels = xs[1];
  g.in_h = xs[2];
  g.in_w = xs[3];
  g.out_channels = ws[0];
  g.kernel_h = ws[2];
  g.kernel_w = ws[3];
  g.stride = stride;
  g.padding = padding;

  Tensor<T> out({g.batch, g.out_channels, g.out_h(), g.out_w()});
  kernels::conv2d_forward(g, x.value().data(), w.value().data(), bias ? bias->value().data() : nullptr,
                          out.data());

  Tape<T>& tape = x.tape();
  const bool needs = any_requires<T>({&x, &w, bias ? &*bias : nullptr});
  return tape.record(std::move(out), needs, [&tape, x, w, bias, g](std::span<const T> dy) {
    T* dx = x.requires_grad() ? tape.grad(x).data() : nullptr;
    T* dw = w.requires_grad() ? tape.grad(w).data() : nullptr;
    T* db = (bias && bias->requires_grad()) ? tape.grad(*bias).data() : nullptr;
    kernels::conv2d_backward(g, x.value().data(), w.value().data(), dy.data(), dx, dw, db);
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T{0} ? xv[i] : T{0};
  Tape<T>& tape = x.tape();
  return tape.record(std::move(out), x.requires_grad(), [&tape, x](std::span<const T> dy) {
    const Tensor<T>& xv = x.value();
    auto dx = tape.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (xv[i] > T{0}) dx[i] += dy[i];
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  check_same_tape(x, w);
  check_same_tape(x, b);
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const std::size_t n = x.shape()[0];
  const std::size_t d = x.shape()[1];
  const std::size_t k = w.shape()[0];
  if (w.shape()[1] != d || b.shape() != Shape{k}) {
    throw ShapeError("linear shape mismatch: x " + to_string(x.shape()) + ", W " + to_string(w.shape()) + ", b " +
                     to_string(b.shape()));
  }
  Tensor<T> out({n, k});
  kernels::gemm_nt(n, k, d, x.value().data(), w.value().data(), out.data(), false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] += b.value()[j];
  }
  Tape<T>& tape = x.tape();
  const bool needs = any_requires<T>({&x, &w, &b});
  return tape.record(std::move(out), needs, [&tape, x, w, b, n, d, k](std::span<const T> dy) {
    if (x.requires_grad()) kernels::gemm_nn(n, d, k, dy.data(), w.value().data(), tape.grad(x).data(), true);
    if (w.requires_grad()) kernels::gemm_tn(k, d, n, dy.data(), x.value().data(), tape.grad(w).data(), true);
    if (b.requires_grad()) {
      auto db = tape.grad(b);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) db[j] += dy[i * k + j];
      }
    }
  });
}

template <typename T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormStats<T>& stats,
                   bool training) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  require_rank(x, 4, "batchnorm2d");
  const std::size_t n = x.shape()[0];
  const std::size_t c = x.shape()[1];
  const std::size_t hw = x.shape()[2] * x.shape()[3];
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} || stats.running_mean.size() != c) {
    throw ShapeError("batchnorm2d parameters do not match " + std::to_string(c) + " channels");
  }
  if (!training && !stats.initialized) {
    throw StateError("batchnorm2d in eval mode before any training step (running statistics uninitialized)");
  }
  const std::size_t count = n * hw;
  if (training && count < 2) throw ShapeError("batchnorm2d training needs more than one value per channel");

  const Tensor<T>& xv = x.value();
  const T* g = gamma.value().data();
  const T* bt = beta.value().data();
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(c);
  Tensor<T> out(xv.shape());

  const long channels = static_cast<long>(c);
#pragma omp parallel for schedule(static) num_threads(kernels::num_threads())
  for (long ch = 0; ch < channels; ++ch) {
    T mean;
    T var;
    if (training) {
      T acc{0};
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xv.data() + (i * c + ch) * hw;
        for (std::size_t s = 0; s < hw; ++s) acc += p[s];
      }
      mean = acc / static_cast<T>(count);
      T sq{0};
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xv.data() + (i * c + ch) * hw;
        for (std::size_t s = 0; s < hw; ++s) sq += (p[s] - mean) * (p[s] - mean);
      }
      var = sq / static_cast<T>(count);
      const T unbiased = sq / static_cast<T>(count - 1);
      const T m = stats.momentum;
      stats.running_mean[ch] = (T{1} - m) * stats.running_mean[ch] + m * mean;
      stats.running_var[ch] = (T{1} - m) * stats.running_var[ch] + m * unbiased;
    } else {
      mean = stats.running_mean[ch];
      var = stats.running_var[ch];
    }
    const T is = T{1} / std::sqrt(var + stats.eps);
    (*inv_std)[ch] = is;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i * c + ch) * hw;
      for (std::size_t s = 0; s < hw; ++s) {
        const T h = (xv[base + s] - mean) * is;
        (*xhat)[base + s] = h;
        out[base + s] = g[ch] * h + bt[ch];
      }
    }
  }
  if (training) stats.initialized = true;

  Tape<T>& tape = x.tape();
  const bool needs = any_requires<T>({&x, &gamma, &beta});
  return tape.record(std::move(out), needs,
                     [&tape, x, gamma, beta, xhat, inv_std, n, c, hw, training](std::span<const T> dy) {
                       const T* g = gamma.value().data();
                       T* dx = x.requires_grad() ? tape.grad(x).data() : nullptr;
                       T* dg = gamma.requires_grad() ? tape.grad(gamma).data() : nullptr;
                       T* db = beta.requires_grad() ? tape.grad(beta).data() : nullptr;
                       const T m = static_cast<T>(n * hw);
                       const long channels = static_cast<long>(c);
#pragma omp parallel for schedule(static) num_threads(kernels::num_threads())
                       for (long ch = 0; ch < channels; ++ch) {
                         T sum_dy{0};
                         T sum_dy_xhat{0};
                         for (std::size_t i = 0; i < n; ++i) {
                           const std::size_t base = (i * c + ch) * hw;
                           for (std::size_t s = 0; s < hw; ++s) {
                             sum_dy += dy[base + s];
                             sum_dy_xhat += dy[base + s] * (*xhat)[base + s];
                           }
                         }
                         if (dg) dg[ch] += sum_dy_xhat;
                         if (db) db[ch] += sum_dy;
                         if (!dx) continue;
                         const T scale = g[ch] * (*inv_std)[ch];
                         for (std::size_t i = 0; i < n; ++i) {
                           const std::size_t base = (i * c + ch) * hw;
                           for (std::size_t s = 0; s < hw; ++s) {
                             if (training) {
                               dx[base + s] += scale * (dy[base + s] - sum_dy / m - (*xhat)[base + s] * sum_dy_xhat / m);
                             } else {
                               dx[base + s] += scale * dy[base + s];
                             }
                           }
                         }
                       }
                     });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t n = x.shape()[0];
  const std::size_t c = x.shape()[1];
  const std::size_t hw = x.shape()[2] * x.shape()[3];
  const Tensor<T>& xv = x.value();
  Tensor<T> out({n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    T acc{0};
    for (std::size_t s = 0; s < hw; ++s) acc += xv[p * hw + s];
    out[p] = acc / static_cast<T>(hw);
  }
  Tape<T>& tape = x.tape();
  return tape.record(std::move(out), x.requires_grad(), [&tape, x, n, c, hw](std::span<const T> dy) {
    auto dx = tape.grad(x);
    const T inv = T{1} / static_cast<T>(hw);
    for (std::size_t p = 0; p < n * c; ++p) {
      const T v = dy[p] * inv;
      for (std::size_t s = 0; s < hw; ++s) dx[p * hw + s] += v;
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_same_tape(a, b);
  require_shape(b.shape(), a.shape(), "add");
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  Tape<T>& tape = a.tape();
  return tape.record(std::move(out), any_requires<T>({&a, &b}), [&tape, a, b](std::span<const T> dy) {
    if (a.requires_grad()) {
      auto da = tape.grad(a);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (b.requires_grad()) {
      auto db = tape.grad(b);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factor;
  Tape<T>& tape = x.tape();
  return tape.record(std::move(out), x.requires_grad(), [&tape, x, factor](std::span<const T> dy) {
    auto dx = tape.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
  });
}

template <typename T>
Var<T> channel_affine(const Var<T>& x, std::span<const T> shift, std::span<const T> mult) {
  require_rank(x, 4, "channel_affine");
  const std::size_t n = x.shape()[0];
  const std::size_t c = x.shape()[1];
  const std::size_t hw = x.shape()[2] * x.shape()[3];
  if (shift.size() != c || mult.size() != c) {
    throw ShapeError("channel_affine needs " + std::to_string(c) + " shift and scale values");
  }
  std::vector<T> m(mult.begin(), mult.end());
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (i * c + ch) * hw;
      for (std::size_t s = 0; s < hw; ++s) out[base + s] = (xv[base + s] - shift[ch]) * mult[ch];
    }
  }
  Tape<T>& tape = x.tape();
  return tape.record(std::move(out), x.requires_grad(), [&tape, x, m, n, c, hw](std::span<const T> dy) {
    auto dx = tape.grad(x);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (i * c + ch) * hw;
        for (std::size_t s = 0; s < hw; ++s) dx[base + s] += dy[base + s] * m[ch];
      }
    }
  });
}

template <typename T>
std::vector<T> softmax_row(std::span<const T> logits) {
  const T mx = *std::max_element(logits.begin(), logits.end());
  std::vector<T> p(logits.size());
  T z{0};
  for (std::size_t j = 0; j < logits.size(); ++j) {
    p[j] = std::exp(logits[j] - mx);
    z += p[j];
  }
  for (auto& v : p) v /= z;
  return p;
}

namespace {

template <typename T>
void check_labels(const Shape& shape, std::span<const int> labels) {
  if (shape.size() != 2) throw ShapeError("cross_entropy expects logits [N,K], got " + to_string(shape));
  if (labels.size() != shape[0]) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(shape[0]) +
                     " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= shape[1]) {
      throw ValueError("label " + std::to_string(y) + " out of range [0, " + std::to_string(shape[1]) + ")");
    }
  }
}

// log-sum-exp stabilized by the row maximum.
template <typename T>
T row_loss(const T* row, std::size_t k, int label) {
  const T mx = *std::max_element(row, row + k);
  T z{0};
  for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
  return std::log(z) + mx - row[label];
}

}  // namespace

template <typename T>
std::vector<T> per_sample_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  check_labels<T>(logits.shape(), labels);
  const std::size_t n = logits.shape()[0];
  const std::size_t k = logits.shape()[1];
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = row_loss(logits.data() + i * k, k, labels[i]);
  return out;
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels, Reduction reduction) {
  check_labels<T>(logits.shape(), labels);
  const std::size_t n = logits.shape()[0];
  const std::size_t k = logits.shape()[1];
  const std::vector<T> losses = per_sample_cross_entropy(logits.value(), labels);
  T total{0};
  for (T l : losses) total += l;
  const T norm = reduction == Reduction::mean ? T{1} / static_cast<T>(n) : T{1};
  Tensor<T> out(Shape{}, std::vector<T>{total * norm});
  std::vector<int> y(labels.begin(), labels.end());
  Tape<T>& tape = logits.tape();
  return tape.record(std::move(out), logits.requires_grad(),
                     [&tape, logits, y = std::move(y), n, k, norm](std::span<const T> dy) {
                       auto dl = tape.grad(logits);
                       const T* lv = logits.value().data();
                       for (std::size_t i = 0; i < n; ++i) {
                         const auto p = softmax_row(std::span<const T>(lv + i * k, k));
                         for (std::size_t j = 0; j < k; ++j) {
                           const T onehot = static_cast<int>(j) == y[i] ? T{1} : T{0};
                           dl[i * k + j] += dy[0] * norm * (p[j] - onehot);
                         }
                       }
                     });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T total{0};
  for (T v : x.value().values()) total += v;
  Tape<T>& tape = x.tape();
  return tape.record(Tensor<T>(Shape{}, std::vector<T>{total}), x.requires_grad(),
                     [&tape, x](std::span<const T> dy) {
                       auto dx = tape.grad(x);
                       for (auto& v : dx) v += dy[0];
                     });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * xv[i];
  Tape<T>& tape = x.tape();
  return tape.record(std::move(out), x.requires_grad(), [&tape, x](std::span<const T> dy) {
    const Tensor<T>& xv = x.value();
    auto dx = tape.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += T{2} * xv[i] * dy[i];
  });
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows expects [N,K], got " + to_string(logits.shape()));
  const std::size_t n = logits.shape()[0];
  const std::size_t k = logits.shape()[1];
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits[i * k + j] > logits[i * k + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

#define LANDSCAPE_INSTANTIATE_OPS(T)                                                                               \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, std::size_t, std::size_t); \
  template Var<T> relu<T>(const Var<T>&);                                                                         \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                                         \
  template Var<T> batchnorm2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormStats<T>&, bool);          \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                                              \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> scale<T>(const Var<T>&, T);                                                                     \
  template Var<T> channel_affine<T>(const Var<T>&, std::span<const T>, std::span<const T>);                       \
  template Var<T> cross_entropy<T>(const Var<T>&, std::span<const int>, Reduction);                               \
  template Var<T> sum<T>(const Var<T>&);                                                                          \
  template Var<T> square<T>(const Var<T>&);                                                                       \
  template std::vector<T> per_sample_cross_entropy<T>(const Tensor<T>&, std::span<const int>);                    \
  template std::vector<T> softmax_row<T>(std::span<const T>);                                                     \
  template std::vector<int> argmax_rows<T>(const Tensor<T>&);

LANDSCAPE_INSTANTIATE_OPS(float)
LANDSCAPE_INSTANTIATE_OPS(double)

#undef LANDSCAPE_INSTANTIATE_OPS

}  // namespace landscape
