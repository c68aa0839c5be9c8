#pragma once

#include <cstddef>

namespace landscape::kernels {

// Geometry of a batched 2-D cross-correlation, NCHW activations and
// KCHW weights.
struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_h() const noexcept { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_w() const noexcept { return (in_w + 2 * padding - kernel_w) / stride + 1; }
  std::size_t patch() const noexcept { return in_channels * kernel_h * kernel_w; }
  std::size_t weight_size() const noexcept { return out_channels * patch(); }
  std::size_t in_plane() const noexcept { return in_channels * in_h * in_w; }
  std::size_t out_plane() const noexcept { return out_channels * out_h() * out_w(); }
};

// C[M,N] = A[M,K] * B[K,N] (+ C when accumulate). Row-major, dense.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

// C[M,N] = A[M,K] * B^T where B is stored [N,K].
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

// C[M,N] = A^T * B where A is stored [K,M].
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

// One image [C,H,W] -> column matrix [C*kh*kw, out_h*out_w]; padding reads as 0.
template <typename T>
void im2col(const ConvGeometry& g, const T* image, T* columns);

// Adjoint of im2col: scatters (adds) columns back into an image.
template <typename T>
void col2im(const ConvGeometry& g, const T* columns, T* image);

// Batched kernels, parallel over samples with OpenMP. Results do not depend
// on the thread count: weight and bias gradients are reduced per sample in
// sample order.
template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output);

// Accumulates into whichever of grad_input / grad_weight / grad_bias are
// non-null.
template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output, T* grad_input,
                     T* grad_weight, T* grad_bias);

// Serial direct-loop implementations kept as the oracle for the kernels above.
namespace reference {

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

template <typename T>
void conv2d_forward(const ConvGeometry& g, const T* input, const T* weight, const T* bias, T* output);

template <typename T>
void conv2d_backward(const ConvGeometry& g, const T* input, const T* weight, const T* grad_output, T* grad_input,
                     T* grad_weight, T* grad_bias);

}  // namespace reference

// Number of OpenMP threads kernels may use; 1 selects the single-threaded
// mode used for acceptance runs.
void set_num_threads(int n);
int num_threads();

}  // namespace landscape::kernels
