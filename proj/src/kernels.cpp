#include "landscape/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <vector>

namespace landscape::kernels {

namespace {

int g_threads = 1;

constexpr std::size_t kBlockN = 512;
constexpr std::size_t kBlockK = 128;

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kTile) {
    const std::size_t i1 = std::min(rows, i0 + kTile);
    for (std::size_t j0 = 0; j0 < cols; j0 += kTile) {
      const std::size_t j1 = std::min(cols, j0 + kTile);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
      }
    }
  }
}

// Four rows of C at a time so each streamed row of B feeds four FMAs.
template <typename T>
void gemm_block(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, std::size_t ldb,
                std::size_t ldc, std::size_t lda) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* __restrict c0 = c + (i + 0) * ldc;
    T* __restrict c1 = c + (i + 1) * ldc;
    T* __restrict c2 = c + (i + 2) * ldc;
    T* __restrict c3 = c + (i + 3) * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T a0 = a[(i + 0) * lda + p];
      const T a1 = a[(i + 1) * lda + p];
      const T a2 = a[(i + 2) * lda + p];
      const T a3 = a[(i + 3) * lda + p];
      const T* __restrict bp = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) {
        const T bv = bp[j];
        c0[j] += a0 * bv;
        c1[j] += a1 * bv;
        c2[j] += a2 * bv;
        c3[j] += a3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    T* __restrict ci = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * lda + p];
      const T* __restrict bp = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

}  // namespace

void set_num_threads(int n) { g_threads = std::max(1, n); }
int num_threads() { return g_threads; }

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
    const std::size_t nb = std::min(kBlockN, n - j0);
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::size_t kb = std::min(kBlockK, k - p0);
      gemm_block(m, nb, kb, a + p0, b + p0 * n + j0, c + j0, n, n, k);
    }
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  std::vector<T> bt(k * n);
  transpose(n, k, b, bt.data());
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  std::vector<T> at(m * k);
  transpose(k, m, a, at.data());
  gemm_nn(m, n, k, at.data(), b, c, accumulate);
}

template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* columns) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  const long pad = static_cast<long>(g.padding);
  const long h = static_cast<long>(g.in_h);
  const long w = static_cast<long>(g.in_w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T* plane = image + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj, ++row) {
        T* out = columns + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - pad;
          T* dst = out + oy * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T{0});
            continue;
          }
          const T* src = plane + iy * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - pad;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* columns, T* image) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  const long pad = static_cast<long>(g.padding);
  const long h = static_cast<long>(g.in_h);
  const long w = static_cast<long>(g.in_w);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T* plane = image + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel_w; ++kj, ++row) {
        const T* in = columns + row * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - pad;
          if (iy < 0 || iy >= h) continue;
          T* dst = plane + iy * w;
          const T* src = in + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - pad;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

namespace {

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.padding == 0;
}

}  // namespace

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output) {
  const std::size_t spatial = g.out_h() * g.out_w();
  const std::size_t patch = g.patch();
  const long batch = static_cast<long>(g.batch);
#pragma omp parallel num_threads(g_threads)
  {
    std::vector<T> columns(is_pointwise(g) ? 0 : patch * spatial);
#pragma omp for schedule(static)
    for (long n = 0; n < batch; ++n) {
      const T* x = input + n * g.in_plane();
      T* y = output + n * g.out_plane();
      const T* cols = x;
      if (!is_pointwise(g)) {
        im2col(g, x, columns.data());
        cols = columns.data();
      }
      gemm_nn(g.out_channels, spatial, patch, weight, cols, y, false);
      if (bias != nullptr) {
        for (std::size_t k = 0; k < g.out_channels; ++k) {
          T* row = y + k * spatial;
          for (std::size_t s = 0; s < spatial; ++s) row[s] += bias[k];
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output, T* grad_input,
                     T* grad_weight, T* grad_bias) {
  const std::size_t spatial = g.out_h() * g.out_w();
  const std::size_t patch = g.patch();
  const std::size_t wsize = g.weight_size();
  const long batch = static_cast<long>(g.batch);
  std::vector<T> per_sample_dw(grad_weight ? wsize * g.batch : 0);

#pragma omp parallel num_threads(g_threads)
  {
    std::vector<T> columns(is_pointwise(g) ? 0 : patch * spatial);
    std::vector<T> dcolumns(grad_input && !is_pointwise(g) ? patch * spatial : 0);
#pragma omp for schedule(static)
    for (long n = 0; n < batch; ++n) {
      const T* x = input + n * g.in_plane();
      const T* dy = grad_output + n * g.out_plane();
      if (grad_weight) {
        const T* cols = x;
        if (!is_pointwise(g)) {
          im2col(g, x, columns.data());
          cols = columns.data();
        }
        gemm_nt(g.out_channels, patch, spatial, dy, cols, per_sample_dw.data() + n * wsize, false);
      }
      if (grad_input) {
        T* dx = grad_input + n * g.in_plane();
        if (is_pointwise(g)) {
          gemm_tn(patch, spatial, g.out_channels, weight, dy, dx, true);
        } else {
          gemm_tn(patch, spatial, g.out_channels, weight, dy, dcolumns.data(), false);
          col2im(g, dcolumns.data(), dx);
        }
      }
    }
  }

  if (grad_weight) {
    for (std::size_t n = 0; n < g.batch; ++n) {
      const T* src = per_sample_dw.data() + n * wsize;
      for (std::size_t i = 0; i < wsize; ++i) grad_weight[i] += src[i];
    }
  }
  if (grad_bias) {
    for (std::size_t n = 0; n < g.batch; ++n) {
      const T* dy = grad_output + n * g.out_plane();
      for (std::size_t k = 0; k < g.out_channels; ++k) {
        T acc{0};
        for (std::size_t s = 0; s < spatial; ++s) acc += dy[k * spatial + s];
        grad_bias[k] += acc;
      }
    }
  }
}

namespace reference {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = accumulate ? c[i * n + j] : T{0};
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t k = 0; k < g.out_channels; ++k) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          T acc = bias ? bias[k] : T{0};
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
              const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.padding);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.padding);
                if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                acc += input[((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix] *
                       weight[((k * g.in_channels + c) * g.kernel_h + ki) * g.kernel_w + kj];
              }
            }
          }
          output[((n * g.out_channels + k) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output, T* grad_input,
                     T* grad_weight, T* grad_bias) {
  const std::size_t oh = g.out_h();
  const std::size_t ow = g.out_w();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t k = 0; k < g.out_channels; ++k) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T dy = grad_output[((n * g.out_channels + k) * oh + oy) * ow + ox];
          if (grad_bias) grad_bias[k] += dy;
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
              const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.padding);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.padding);
                if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                const std::size_t xi = ((n * g.in_channels + c) * g.in_h + iy) * g.in_w + ix;
                const std::size_t wi = ((k * g.in_channels + c) * g.kernel_h + ki) * g.kernel_w + kj;
                if (grad_input) grad_input[xi] += dy * weight[wi];
                if (grad_weight) grad_weight[wi] += dy * input[xi];
              }
            }
          }
        }
      }
    }
  }
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void conv2d_forward<float>(const ConvGeometry&, const float*, const float*, const float*, float*);
template void conv2d_forward<double>(const ConvGeometry&, const double*, const double*, const double*, double*);
template void conv2d_backward<float>(const ConvGeometry&, const float*, const float*, const float*, float*, float*,
                                     float*);
template void conv2d_backward<double>(const ConvGeometry&, const double*, const double*, const double*, double*,
                                      double*, double*);

}  // namespace reference

#define LANDSCAPE_INSTANTIATE_KERNELS(T)                                                                 \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);         \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);         \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);         \
  template void im2col<T>(const ConvGeometry&, const T*, T*);                                            \
  template void col2im<T>(const ConvGeometry&, const T*, T*);                                            \
  template void conv2d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);                \
  template void conv2d_backward<T>(const ConvGeometry&, const T*, const T*, const T*, T*, T*, T*);

LANDSCAPE_INSTANTIATE_KERNELS(float)
LANDSCAPE_INSTANTIATE_KERNELS(double)

#undef LANDSCAPE_INSTANTIATE_KERNELS

}  // namespace landscape::kernels
