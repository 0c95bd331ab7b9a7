#ifndef ASABF_OPS_HPP_
#define ASABF_OPS_HPP_

#include <complex>
#include <vector>

#include "asabf/tensor.hpp"

namespace asabf {
namespace ops {

// ---- structure ----
Tensor reshape(const Tensor& t, Shape shape);
// General axis permutation; perm[i] names the source axis of output axis i.
Tensor transpose(const Tensor& t, const std::vector<int>& perm);
// Swap the last two axes.
Tensor transpose2d(const Tensor& t);
Tensor slice_axis(const Tensor& t, int axis, std::int64_t start,
                  std::int64_t len);
Tensor concat(const std::vector<Tensor>& parts, int axis);
// Broadcast: extents of `t` must equal the target or be 1; missing leading
// axes are added. Backward sums over the broadcast positions.
Tensor broadcast_to(const Tensor& t, Shape shape);

// ---- arithmetic (same shape, same dtype) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scalar_mul(const Tensor& a, std::complex<double> s);
Tensor add_scalar(const Tensor& a, double s);  // real tensors

// ---- reductions ----
Tensor sum(const Tensor& a);                 // -> scalar
Tensor sum_axis(const Tensor& a, int axis);  // drop one axis
Tensor mean_axis(const Tensor& a, int axis);

// ---- linear algebra (batched over leading axes) ----
// [..., m, k] x [..., k, n] -> [..., m, n]; leading axes must match.
Tensor matmul(const Tensor& a, const Tensor& b);
// Inverse of each [..., n, n] slice (Gauss-Jordan with partial pivoting).
// Pivot below 1e-12 x (max |entry| of the slice) raises SingularMatrixError.
Tensor cinv(const Tensor& a);
// Trace of each [..., n, n] slice -> [...].
Tensor trace_last2(const Tensor& a);

// ---- nonlinearities (real tensors) ----
Tensor relu(const Tensor& a);
// Softmax over the last axis; rows are strictly positive and sum to 1.
Tensor softmax_rows(const Tensor& a);
// Normalize over the last axis: (x - mean) / sqrt(var + eps).
Tensor layer_norm(const Tensor& a, double eps = 1e-5);
Tensor log(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor sin(const Tensor& a);

// ---- complex structure ----
Tensor real(const Tensor& a);
Tensor imag(const Tensor& a);
Tensor make_complex(const Tensor& re, const Tensor& im);
Tensor to_complex(const Tensor& re);  // imaginary part zero
Tensor conj(const Tensor& a);
Tensor abs2(const Tensor& a);   // |z|^2 -> real
Tensor angle(const Tensor& a);  // atan2(Im, Re) -> real
// Conjugate transpose of the last two axes.
Tensor hermitian(const Tensor& a);

// ---- selection ----
// mask is a real 0/1 tensor treated as a constant; out = mask ? a : b.
Tensor where(const Tensor& mask, const Tensor& a, const Tensor& b);

// ---- signal primitives ----
// frames [..., T, N] -> [..., out_len]; out[t*hop + j] += frames[t, j].
Tensor overlap_add(const Tensor& frames, std::int64_t hop,
                   std::int64_t out_len);
// One-sided inverse DFT of each frame: [..., F] complex -> [..., n_fft]
// real with F = n_fft/2 + 1. Imaginary parts of DC/Nyquist are ignored.
Tensor irfft_frames(const Tensor& spec, std::int64_t n_fft);

}  // namespace ops
}  // namespace asabf

#endif  // ASABF_OPS_HPP_
