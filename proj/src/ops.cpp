#include "asabf/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>

#include "asabf/autodiff.hpp"
#include "asabf/errors.hpp"
#include "asabf/fft.hpp"

namespace asabf {
namespace ops {

namespace {

using autodiff::Node;
using VjpFn = std::function<std::vector<Tensor>(const Tensor&,
                                                const std::vector<Tensor>&)>;

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Tensor finish(const char* name, std::vector<Tensor> inputs, Shape shape,
              Dtype dtype, std::vector<double> storage, VjpFn vjp) {
  bool needs_grad = false;
  if (autodiff::grad_enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  std::shared_ptr<Node> node;
  if (needs_grad) {
    node = std::make_shared<Node>();
    node->op = name;
    node->inputs = std::move(inputs);
    node->vjp = std::move(vjp);
  }
  return make_op_output(std::move(shape), dtype, std::move(storage),
                        std::move(node));
}

std::vector<std::int64_t> row_strides(const Shape& shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    s[i] = s[i + 1] * shape[i + 1];
  }
  return s;
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  if (a.dtype() != b.dtype()) {
    throw DimensionError(std::string(op) + ": dtype mismatch");
  }
}

void require_real(const Tensor& a, const char* op) {
  if (a.is_complex()) {
    throw DimensionError(std::string(op) + ": real tensor required");
  }
}

int normalize_axis(const Tensor& t, int axis, const char* op) {
  int r = t.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError(std::string(op) + ": axis out of range for " +
                         shape_str(t.shape()));
  }
  return axis;
}

// Collapses shape around `axis` into [outer, extent, inner].
struct AxisView {
  std::int64_t outer, extent, inner;
};

AxisView axis_view(const Shape& shape, int axis) {
  AxisView v{1, shape[axis], 1};
  for (int i = 0; i < axis; ++i) v.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

// Applies the same elementwise plane copy to re and (if present) im.
template <typename Fn>
void for_each_plane(const Tensor& t, std::vector<double>& out_storage,
                    std::int64_t out_numel, Fn&& fn) {
  fn(t.storage().data(), out_storage.data());
  if (t.is_complex()) {
    fn(t.storage().data() + t.numel(), out_storage.data() + out_numel);
  }
}

}  // namespace

// ---------------------------------------------------------------- structure

Tensor reshape(const Tensor& t, Shape shape) {
  if (shape_numel(shape) != t.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(t.shape()) +
                         " as " + shape_str(shape));
  }
  Shape orig = t.shape();
  return finish("reshape", {t}, std::move(shape), t.dtype(), t.storage(),
                [orig](const Tensor& g, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{reshape(g, orig)};
                });
}

Tensor transpose(const Tensor& t, const std::vector<int>& perm) {
  const int r = t.rank();
  if (static_cast<int>(perm.size()) != r) {
    throw DimensionError("transpose: permutation rank mismatch");
  }
  std::vector<bool> seen(r, false);
  for (int p : perm) {
    if (p < 0 || p >= r || seen[p]) {
      throw DimensionError("transpose: invalid permutation");
    }
    seen[p] = true;
  }
  const Shape& in_shape = t.shape();
  Shape out_shape(r);
  for (int i = 0; i < r; ++i) out_shape[i] = in_shape[perm[i]];

  const auto in_strides = row_strides(in_shape);
  const auto out_strides = row_strides(out_shape);
  const std::int64_t n = t.numel();
  std::vector<double> storage(t.storage().size());
  for_each_plane(t, storage, n, [&](const double* src, double* dst) {
    for (std::int64_t o = 0; o < n; ++o) {
      std::int64_t src_off = 0;
      std::int64_t rem = o;
      for (int i = 0; i < r; ++i) {
        const std::int64_t c = rem / out_strides[i];
        rem -= c * out_strides[i];
        src_off += c * in_strides[perm[i]];
      }
      dst[o] = src[src_off];
    }
  });

  std::vector<int> inv(r);
  for (int i = 0; i < r; ++i) inv[perm[i]] = i;
  return finish("transpose", {t}, std::move(out_shape), t.dtype(),
                std::move(storage),
                [inv](const Tensor& g, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{transpose(g, inv)};
                });
}

Tensor transpose2d(const Tensor& t) {
  const int r = t.rank();
  if (r < 2) throw DimensionError("transpose2d: rank >= 2 required");
  std::vector<int> perm(r);
  for (int i = 0; i < r; ++i) perm[i] = i;
  std::swap(perm[r - 1], perm[r - 2]);
  return transpose(t, perm);
}

Tensor slice_axis(const Tensor& t, int axis, std::int64_t start,
                  std::int64_t len) {
  axis = normalize_axis(t, axis, "slice_axis");
  const Shape& in_shape = t.shape();
  if (start < 0 || len < 0 || start + len > in_shape[axis]) {
    throw DimensionError("slice_axis: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") exceeds extent " +
                         std::to_string(in_shape[axis]));
  }
  Shape out_shape = in_shape;
  out_shape[axis] = len;
  const AxisView v = axis_view(in_shape, axis);
  const std::int64_t out_numel = shape_numel(out_shape);
  std::vector<double> storage(t.is_complex() ? 2 * out_numel : out_numel);
  for_each_plane(t, storage, out_numel, [&](const double* src, double* dst) {
    for (std::int64_t o = 0; o < v.outer; ++o) {
      const double* s = src + (o * v.extent + start) * v.inner;
      double* d = dst + o * len * v.inner;
      std::memcpy(d, s, sizeof(double) * len * v.inner);
    }
  });
  const std::int64_t in_extent = in_shape[axis];
  return finish(
      "slice_axis", {t}, std::move(out_shape), t.dtype(), std::move(storage),
      [axis, start, len, in_extent, v](const Tensor& g,
                                       const std::vector<Tensor>& in) {
        const Tensor& src = in[0];
        const std::int64_t n = src.numel();
        std::vector<double> gs(src.storage().size(), 0.0);
        const std::int64_t g_numel = g.numel();
        auto scatter = [&](const double* gp, double* dp) {
          for (std::int64_t o = 0; o < v.outer; ++o) {
            const double* s = gp + o * len * v.inner;
            double* d = dp + (o * in_extent + start) * v.inner;
            std::memcpy(d, s, sizeof(double) * len * v.inner);
          }
        };
        scatter(g.storage().data(), gs.data());
        if (g.is_complex()) {
          scatter(g.storage().data() + g_numel, gs.data() + n);
        }
        return std::vector<Tensor>{
            Tensor::from_storage(src.shape(), src.dtype(), std::move(gs))};
      });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const int r = parts[0].rank();
  axis = normalize_axis(parts[0], axis, "concat");
  Shape out_shape = parts[0].shape();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != r || p.dtype() != parts[0].dtype()) {
      throw DimensionError("concat: rank/dtype mismatch");
    }
    for (int i = 0; i < r; ++i) {
      if (i != axis && p.dim(i) != out_shape[i]) {
        throw DimensionError("concat: extent mismatch on axis " +
                             std::to_string(i));
      }
    }
    total += p.dim(axis);
  }
  out_shape[axis] = total;
  const std::int64_t out_numel = shape_numel(out_shape);
  const bool cplx = parts[0].is_complex();
  std::vector<double> storage(cplx ? 2 * out_numel : out_numel);
  const AxisView ov = axis_view(out_shape, axis);
  std::vector<std::int64_t> offsets;
  std::int64_t pos = 0;
  for (const auto& p : parts) {
    offsets.push_back(pos);
    const std::int64_t ext = p.dim(axis);
    const std::int64_t pn = p.numel();
    auto copy_plane = [&](const double* src, double* dst) {
      for (std::int64_t o = 0; o < ov.outer; ++o) {
        std::memcpy(dst + (o * ov.extent + pos) * ov.inner,
                    src + o * ext * ov.inner, sizeof(double) * ext * ov.inner);
      }
    };
    copy_plane(p.storage().data(), storage.data());
    if (cplx) copy_plane(p.storage().data() + pn, storage.data() + out_numel);
    pos += ext;
  }
  std::vector<std::int64_t> extents;
  for (const auto& p : parts) extents.push_back(p.dim(axis));
  return finish("concat", parts, std::move(out_shape), parts[0].dtype(),
                std::move(storage),
                [axis, offsets, extents](const Tensor& g,
                                         const std::vector<Tensor>& in) {
                  std::vector<Tensor> gs;
                  gs.reserve(in.size());
                  for (std::size_t i = 0; i < in.size(); ++i) {
                    gs.push_back(slice_axis(g, axis, offsets[i], extents[i]));
                  }
                  return gs;
                });
}

Tensor broadcast_to(const Tensor& t, Shape shape) {
  const int in_r = t.rank();
  const int out_r = static_cast<int>(shape.size());
  if (in_r > out_r) {
    throw DimensionError("broadcast_to: rank decrease from " +
                         shape_str(t.shape()) + " to " + shape_str(shape));
  }
  const Shape& in_shape = t.shape();
  const int lead = out_r - in_r;
  for (int i = 0; i < in_r; ++i) {
    if (in_shape[i] != 1 && in_shape[i] != shape[lead + i]) {
      throw DimensionError("broadcast_to: incompatible extents " +
                           shape_str(in_shape) + " -> " + shape_str(shape));
    }
  }
  const auto in_strides = row_strides(in_shape);
  const auto out_strides = row_strides(shape);
  const std::int64_t out_numel = shape_numel(shape);
  std::vector<double> storage(t.is_complex() ? 2 * out_numel : out_numel);
  for_each_plane(t, storage, out_numel, [&](const double* src, double* dst) {
    for (std::int64_t o = 0; o < out_numel; ++o) {
      std::int64_t rem = o;
      std::int64_t src_off = 0;
      for (int i = 0; i < out_r; ++i) {
        const std::int64_t c = rem / out_strides[i];
        rem -= c * out_strides[i];
        if (i >= lead && in_shape[i - lead] != 1) {
          src_off += c * in_strides[i - lead];
        }
      }
      dst[o] = src[src_off];
    }
  });
  Shape out_shape = shape;
  return finish(
      "broadcast_to", {t}, std::move(shape), t.dtype(), std::move(storage),
      [out_shape](const Tensor& g, const std::vector<Tensor>& in) {
        // Sum g over the broadcast positions back onto the input shape.
        const Tensor& src = in[0];
        const Shape& in_shape = src.shape();
        const int out_r = static_cast<int>(out_shape.size());
        const int lead = out_r - src.rank();
        const auto in_strides = row_strides(in_shape);
        const auto out_strides = row_strides(out_shape);
        const std::int64_t out_numel = g.numel();
        const std::int64_t in_numel = src.numel();
        std::vector<double> gs(src.storage().size(), 0.0);
        auto reduce_plane = [&](const double* gp, double* dp) {
          for (std::int64_t o = 0; o < out_numel; ++o) {
            std::int64_t rem = o;
            std::int64_t src_off = 0;
            for (int i = 0; i < out_r; ++i) {
              const std::int64_t c = rem / out_strides[i];
              rem -= c * out_strides[i];
              if (i >= lead && in_shape[i - lead] != 1) {
                src_off += c * in_strides[i - lead];
              }
            }
            dp[src_off] += gp[o];
          }
        };
        reduce_plane(g.storage().data(), gs.data());
        if (g.is_complex()) {
          reduce_plane(g.storage().data() + out_numel, gs.data() + in_numel);
        }
        return std::vector<Tensor>{
            Tensor::from_storage(in_shape, src.dtype(), std::move(gs))};
      });
}

// --------------------------------------------------------------- arithmetic

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> storage(a.storage().size());
  const auto& x = a.storage();
  const auto& y = b.storage();
  for (std::size_t i = 0; i < storage.size(); ++i) storage[i] = x[i] + y[i];
  return finish("add", {a, b}, a.shape(), a.dtype(), std::move(storage),
                [](const Tensor& g, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{g, g};
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> storage(a.storage().size());
  const auto& x = a.storage();
  const auto& y = b.storage();
  for (std::size_t i = 0; i < storage.size(); ++i) storage[i] = x[i] - y[i];
  return finish("sub", {a, b}, a.shape(), a.dtype(), std::move(storage),
                [](const Tensor& g, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{g, neg(g)};
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  const std::int64_t n = a.numel();
  std::vector<double> storage(a.storage().size());
  if (a.is_complex()) {
    const double *ar = a.re(), *ai = a.im(), *br = b.re(), *bi = b.im();
    for (std::int64_t i = 0; i < n; ++i) {
      storage[i] = ar[i] * br[i] - ai[i] * bi[i];
      storage[n + i] = ar[i] * bi[i] + ai[i] * br[i];
    }
  } else {
    const auto& x = a.storage();
    const auto& y = b.storage();
    for (std::int64_t i = 0; i < n; ++i) storage[i] = x[i] * y[i];
  }
  return finish("mul", {a, b}, a.shape(), a.dtype(), std::move(storage),
                [](const Tensor& g, const std::vector<Tensor>& in) {
                  if (g.is_complex()) {
                    return std::vector<Tensor>{mul(conj(in[1]), g),
                                               mul(conj(in[0]), g)};
                  }
                  return std::vector<Tensor>{mul(in[1], g), mul(in[0], g)};
                });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same(a, b, "div");
  const std::int64_t n = a.numel();
  std::vector<double> storage(a.storage().size());
  if (a.is_complex()) {
    const double *ar = a.re(), *ai = a.im(), *br = b.re(), *bi = b.im();
    for (std::int64_t i = 0; i < n; ++i) {
      const std::complex<double> q =
          std::complex<double>(ar[i], ai[i]) / std::complex<double>(br[i], bi[i]);
      storage[i] = q.real();
      storage[n + i] = q.imag();
    }
  } else {
    const auto& x = a.storage();
    const auto& y = b.storage();
    for (std::int64_t i = 0; i < n; ++i) storage[i] = x[i] / y[i];
  }
  Tensor out = finish(
      "div", {a, b}, a.shape(), a.dtype(), std::move(storage),
      [](const Tensor& g, const std::vector<Tensor>& in) {
        // q = a/b: dL/da = g * conj(1/b); dL/db = -g * conj(q/b).
        const Tensor q = div(in[0], in[1]);
        if (g.is_complex()) {
          return std::vector<Tensor>{div(g, conj(in[1])),
                                     neg(mul(g, conj(div(q, in[1]))))};
        }
        return std::vector<Tensor>{div(g, in[1]),
                                   neg(mul(g, div(q, in[1])))};
      });
  return out;
}

Tensor neg(const Tensor& a) {
  std::vector<double> storage(a.storage().size());
  const auto& x = a.storage();
  for (std::size_t i = 0; i < storage.size(); ++i) storage[i] = -x[i];
  return finish("neg", {a}, a.shape(), a.dtype(), std::move(storage),
                [](const Tensor& g, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{neg(g)};
                });
}

Tensor scalar_mul(const Tensor& a, std::complex<double> s) {
  const std::int64_t n = a.numel();
  std::vector<double> storage(a.storage().size());
  if (a.is_complex()) {
    const double *ar = a.re(), *ai = a.im();
    for (std::int64_t i = 0; i < n; ++i) {
      storage[i] = ar[i] * s.real() - ai[i] * s.imag();
      storage[n + i] = ar[i] * s.imag() + ai[i] * s.real();
    }
  } else {
    if (s.imag() != 0.0) {
      throw ContractError("scalar_mul: complex scalar on real tensor");
    }
    const auto& x = a.storage();
    for (std::int64_t i = 0; i < n; ++i) storage[i] = x[i] * s.real();
  }
  return finish("scalar_mul", {a}, a.shape(), a.dtype(), std::move(storage),
                [s](const Tensor& g, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{scalar_mul(g, std::conj(s))};
                });
}

Tensor add_scalar(const Tensor& a, double s) {
  require_real(a, "add_scalar");
  std::vector<double> storage(a.storage().size());
  const auto& x = a.storage();
  for (std::size_t i = 0; i < storage.size(); ++i) storage[i] = x[i] + s;
  return finish("add_scalar", {a}, a.shape(), a.dtype(), std::move(storage),
                [](const Tensor& g, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{g};
                });
}

// --------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  const std::int64_t n = a.numel();
  if (a.is_complex()) {
    double sr = 0.0, si = 0.0;
    const double *re = a.re(), *im = a.im();
    for (std::int64_t i = 0; i < n; ++i) {
      sr += re[i];
      si += im[i];
    }
    return finish("sum", {a}, {}, Dtype::kComplex128, {sr, si},
                  [](const Tensor& g, const std::vector<Tensor>& in) {
                    return std::vector<Tensor>{
                        broadcast_to(g, in[0].shape())};
                  });
  }
  double s = 0.0;
  for (double v : a.storage()) s += v;
  return finish("sum", {a}, {}, Dtype::kReal64, {s},
                [](const Tensor& g, const std::vector<Tensor>& in) {
                  return std::vector<Tensor>{broadcast_to(g, in[0].shape())};
                });
}

Tensor sum_axis(const Tensor& a, int axis) {
  axis = normalize_axis(a, axis, "sum_axis");
  const Shape& in_shape = a.shape();
  Shape out_shape;
  for (int i = 0; i < a.rank(); ++i) {
    if (i != axis) out_shape.push_back(in_shape[i]);
  }
  const AxisView v = axis_view(in_shape, axis);
  const std::int64_t out_numel = shape_numel(out_shape);
  std::vector<double> storage(a.is_complex() ? 2 * out_numel : out_numel, 0.0);
  for_each_plane(a, storage, out_numel, [&](const double* src, double* dst) {
    for (std::int64_t o = 0; o < v.outer; ++o) {
      for (std::int64_t e = 0; e < v.extent; ++e) {
        const double* s = src + (o * v.extent + e) * v.inner;
        double* d = dst + o * v.inner;
        for (std::int64_t i = 0; i < v.inner; ++i) d[i] += s[i];
      }
    }
  });
  const int ax = axis;
  return finish("sum_axis", {a}, std::move(out_shape), a.dtype(),
                std::move(storage),
                [ax](const Tensor& g, const std::vector<Tensor>& in) {
                  Shape with_one = in[0].shape();
                  with_one[ax] = 1;
                  return std::vector<Tensor>{
                      broadcast_to(reshape(g, with_one), in[0].shape())};
                });
}

Tensor mean_axis(const Tensor& a, int axis) {
  axis = normalize_axis(a, axis, "mean_axis");
  const std::int64_t n = a.dim(axis);
  if (n == 0) throw InputError("mean_axis: empty axis");
  return scalar_mul(sum_axis(a, axis), 1.0 / static_cast<double>(n));
}

// ----------------------------------------------------------- linear algebra

namespace {

struct MatMulDims {
  std::int64_t batch, m, k, n;
  Shape out_shape;
};

MatMulDims matmul_dims(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank()) {
    throw DimensionError("matmul: rank mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  if (a.dtype() != b.dtype()) throw DimensionError("matmul: dtype mismatch");
  const int r = a.rank();
  MatMulDims d{1, a.dim(r - 2), a.dim(r - 1), b.dim(r - 1), {}};
  if (b.dim(r - 2) != d.k) {
    throw DimensionError("matmul: inner extents differ: " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  for (int i = 0; i < r - 2; ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw DimensionError("matmul: batch extents differ");
    }
    d.batch *= a.dim(i);
    d.out_shape.push_back(a.dim(i));
  }
  d.out_shape.push_back(d.m);
  d.out_shape.push_back(d.n);
  return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatMulDims d = matmul_dims(a, b);
  const std::int64_t out_numel = d.batch * d.m * d.n;
  const bool cplx = a.is_complex();
  std::vector<double> storage(cplx ? 2 * out_numel : out_numel, 0.0);
  const std::int64_t an = a.numel(), bn = b.numel();
  for (std::int64_t bt = 0; bt < d.batch; ++bt) {
    const double* ar = a.re() + bt * d.m * d.k;
    const double* br = b.re() + bt * d.k * d.n;
    double* cr = storage.data() + bt * d.m * d.n;
    if (!cplx) {
      MutMap(cr, d.m, d.n).noalias() =
          ConstMap(ar, d.m, d.k) * ConstMap(br, d.k, d.n);
    } else {
      const double* ai = a.re() + an + bt * d.m * d.k;
      const double* bi = b.re() + bn + bt * d.k * d.n;
      double* ci = storage.data() + out_numel + bt * d.m * d.n;
      MutMap(cr, d.m, d.n).noalias() =
          ConstMap(ar, d.m, d.k) * ConstMap(br, d.k, d.n);
      MutMap(cr, d.m, d.n).noalias() -=
          ConstMap(ai, d.m, d.k) * ConstMap(bi, d.k, d.n);
      MutMap(ci, d.m, d.n).noalias() =
          ConstMap(ar, d.m, d.k) * ConstMap(bi, d.k, d.n);
      MutMap(ci, d.m, d.n).noalias() +=
          ConstMap(ai, d.m, d.k) * ConstMap(br, d.k, d.n);
    }
  }
  return finish("matmul", {a, b}, d.out_shape, a.dtype(), std::move(storage),
                [](const Tensor& g, const std::vector<Tensor>& in) {
                  // dA = g . B^H, dB = A^H . g (plain transpose for real).
                  return std::vector<Tensor>{matmul(g, hermitian(in[1])),
                                             matmul(hermitian(in[0]), g)};
                });
}

namespace {

template <typename S>
void invert_square(std::vector<S>& m, std::int64_t n, std::int64_t batch_idx) {
  std::vector<S> inv(n * n, S(0));
  for (std::int64_t i = 0; i < n; ++i) inv[i * n + i] = S(1);
  double ref = 0.0;
  for (const S& v : m) ref = std::max(ref, std::abs(v));
  const double thresh = 1e-12 * ref;
  for (std::int64_t col = 0; col < n; ++col) {
    std::int64_t piv = col;
    double best = std::abs(m[col * n + col]);
    for (std::int64_t r = col + 1; r < n; ++r) {
      const double v = std::abs(m[r * n + col]);
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (!(best > thresh)) {
      throw SingularMatrixError(
          "cinv: matrix singular to working precision (batch " +
          std::to_string(batch_idx) + ", pivot " + std::to_string(col) + ")");
    }
    if (piv != col) {
      for (std::int64_t j = 0; j < n; ++j) {
        std::swap(m[col * n + j], m[piv * n + j]);
        std::swap(inv[col * n + j], inv[piv * n + j]);
      }
    }
    const S dlt = m[col * n + col];
    for (std::int64_t j = 0; j < n; ++j) {
      m[col * n + j] /= dlt;
      inv[col * n + j] /= dlt;
    }
    for (std::int64_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const S f = m[r * n + col];
      if (f == S(0)) continue;
      for (std::int64_t j = 0; j < n; ++j) {
        m[r * n + j] -= f * m[col * n + j];
        inv[r * n + j] -= f * inv[col * n + j];
      }
    }
  }
  m = std::move(inv);
}

}  // namespace

Tensor cinv(const Tensor& a) {
  const int r = a.rank();
  if (r < 2 || a.dim(r - 1) != a.dim(r - 2)) {
    throw DimensionError("cinv: square matrices required, got " +
                         shape_str(a.shape()));
  }
  const std::int64_t n = a.dim(r - 1);
  std::int64_t batch = 1;
  for (int i = 0; i < r - 2; ++i) batch *= a.dim(i);
  const std::int64_t numel = a.numel();
  std::vector<double> storage(a.storage().size());
  if (a.is_complex()) {
    std::vector<std::complex<double>> scratch(n * n);
    for (std::int64_t b = 0; b < batch; ++b) {
      const double* re = a.re() + b * n * n;
      const double* im = a.re() + numel + b * n * n;
      for (std::int64_t i = 0; i < n * n; ++i) scratch[i] = {re[i], im[i]};
      invert_square(scratch, n, b);
      double* out_re = storage.data() + b * n * n;
      double* out_im = storage.data() + numel + b * n * n;
      for (std::int64_t i = 0; i < n * n; ++i) {
        out_re[i] = scratch[i].real();
        out_im[i] = scratch[i].imag();
      }
    }
  } else {
    std::vector<double> scratch(n * n);
    for (std::int64_t b = 0; b < batch; ++b) {
      const double* src = a.re() + b * n * n;
      scratch.assign(src, src + n * n);
      invert_square(scratch, n, b);
      std::copy(scratch.begin(), scratch.end(), storage.data() + b * n * n);
    }
  }
  Tensor out_data = Tensor::from_storage(a.shape(), a.dtype(), storage);
  const Tensor y = out_data;  // detached; captured for the backward rule
  return finish("cinv", {a}, a.shape(), a.dtype(), std::move(storage),
                [y](const Tensor& g, const std::vector<Tensor>&) {
                  // dA = -Y^H . g . Y^H with Y = A^{-1}.
                  const Tensor yh = hermitian(y);
                  return std::vector<Tensor>{neg(matmul(matmul(yh, g), yh))};
                });
}

Tensor trace_last2(const Tensor& a) {
  const int r = a.rank();
  if (r < 2 || a.dim(r - 1) != a.dim(r - 2)) {
    throw DimensionError("trace_last2: square matrices required");
  }
  const std::int64_t n = a.dim(r - 1);
  std::int64_t batch = 1;
  Shape out_shape;
  for (int i = 0; i < r - 2; ++i) {
    batch *= a.dim(i);
    out_shape.push_back(a.dim(i));
  }
  const std::int64_t numel = a.numel();
  const bool cplx = a.is_complex();
  std::vector<double> storage(cplx ? 2 * batch : batch, 0.0);
  for (std::int64_t b = 0; b < batch; ++b) {
    const double* re = a.re() + b * n * n;
    double sr = 0.0;
    for (std::int64_t i = 0; i < n; ++i) sr += re[i * n + i];
    storage[b] = sr;
    if (cplx) {
      const double* im = a.re() + numel + b * n * n;
      double si = 0.0;
      for (std::int64_t i = 0; i < n; ++i) si += im[i * n + i];
      storage[batch + b] = si;
    }
  }
  const std::int64_t nn = n;
  return finish(
      "trace_last2", {a}, std::move(out_shape), a.dtype(), std::move(storage),
      [nn](const Tensor& g, const std::vector<Tensor>& in) {
        const Tensor& src = in[0];
        const std::int64_t batch = g.numel();
        const std::int64_t numel = src.numel();
        std::vector<double> gs(src.storage().size(), 0.0);
        for (std::int64_t b = 0; b < batch; ++b) {
          for (std::int64_t i = 0; i < nn; ++i) {
            gs[b * nn * nn + i * nn + i] = g.storage()[b];
          }
          if (src.is_complex()) {
            for (std::int64_t i = 0; i < nn; ++i) {
              gs[numel + b * nn * nn + i * nn + i] =
                  g.storage()[batch + b];
            }
          }
        }
        return std::vector<Tensor>{
            Tensor::from_storage(src.shape(), src.dtype(), std::move(gs))};
      });
}

// ------------------------------------------------------------ nonlinearities

Tensor relu(const Tensor& a) {
  require_real(a, "relu");
  std::vector<double> storage(a.storage().size());
  const auto& x = a.storage();
  for (std::size_t i = 0; i < storage.size(); ++i) {
    storage[i] = x[i] > 0.0 ? x[i] : 0.0;
  }
  return finish("relu", {a}, a.shape(), a.dtype(), std::move(storage),
                [](const Tensor& g, const std::vector<Tensor>& in) {
                  const auto& x = in[0].storage();
                  std::vector<double> gs(g.storage().size());
                  const auto& gv = g.storage();
                  for (std::size_t i = 0; i < gs.size(); ++i) {
                    gs[i] = x[i] > 0.0 ? gv[i] : 0.0;
                  }
                  return std::vector<Tensor>{Tensor::from_storage(
                      in[0].shape(), Dtype::kReal64, std::move(gs))};
                });
}

Tensor softmax_rows(const Tensor& a) {
  require_real(a, "softmax_rows");
  if (a.rank() < 1) throw DimensionError("softmax_rows: rank >= 1 required");
  const std::int64_t cols = a.dim(-1);
  if (cols == 0) throw DimensionError("softmax_rows: empty last axis");
  const std::int64_t rows = a.numel() / cols;
  std::vector<double> storage(a.storage().size());
  const auto& x = a.storage();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = storage.data() + r * cols;
    double mx = xr[0];
    for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
    double s = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      s += yr[c];
    }
    const double inv = 1.0 / s;
    for (std::int64_t c = 0; c < cols; ++c) yr[c] *= inv;
  }
  Tensor y = Tensor::from_storage(a.shape(), Dtype::kReal64, storage);
  return finish(
      "softmax_rows", {a}, a.shape(), a.dtype(), std::move(storage),
      [y, cols](const Tensor& g, const std::vector<Tensor>& in) {
        const std::int64_t rows = y.numel() / cols;
        std::vector<double> gs(y.storage().size());
        const auto& yv = y.storage();
        const auto& gv = g.storage();
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* yr = yv.data() + r * cols;
          const double* gr = gv.data() + r * cols;
          double dot = 0.0;
          for (std::int64_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
          double* dr = gs.data() + r * cols;
          for (std::int64_t c = 0; c < cols; ++c) {
            dr[c] = yr[c] * (gr[c] - dot);
          }
        }
        return std::vector<Tensor>{Tensor::from_storage(
            in[0].shape(), Dtype::kReal64, std::move(gs))};
      });
}

Tensor layer_norm(const Tensor& a, double eps) {
  require_real(a, "layer_norm");
  if (a.rank() < 1) throw DimensionError("layer_norm: rank >= 1 required");
  const std::int64_t cols = a.dim(-1);
  if (cols == 0) throw DimensionError("layer_norm: empty last axis");
  const std::int64_t rows = a.numel() / cols;
  std::vector<double> storage(a.storage().size());
  std::vector<double> inv_std(rows);
  const auto& x = a.storage();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double mean = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) mean += xr[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) {
      const double d = xr[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    double* yr = storage.data() + r * cols;
    for (std::int64_t c = 0; c < cols; ++c) yr[c] = (xr[c] - mean) * inv;
  }
  Tensor xhat = Tensor::from_storage(a.shape(), Dtype::kReal64, storage);
  return finish(
      "layer_norm", {a}, a.shape(), a.dtype(), std::move(storage),
      [xhat, inv_std, cols](const Tensor& g, const std::vector<Tensor>& in) {
        const std::int64_t rows = xhat.numel() / cols;
        const auto& hv = xhat.storage();
        const auto& gv = g.storage();
        std::vector<double> gs(hv.size());
        const double inv_n = 1.0 / static_cast<double>(cols);
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* hr = hv.data() + r * cols;
          const double* gr = gv.data() + r * cols;
          double g_mean = 0.0, gh_mean = 0.0;
          for (std::int64_t c = 0; c < cols; ++c) {
            g_mean += gr[c];
            gh_mean += gr[c] * hr[c];
          }
          g_mean *= inv_n;
          gh_mean *= inv_n;
          double* dr = gs.data() + r * cols;
          for (std::int64_t c = 0; c < cols; ++c) {
            dr[c] = inv_std[r] * (gr[c] - g_mean - hr[c] * gh_mean);
          }
        }
        return std::vector<Tensor>{Tensor::from_storage(
            in[0].shape(), Dtype::kReal64, std::move(gs))};
      });
}

namespace {

template <typename FwdFn, typename DerFn>
Tensor real_unary(const char* name, const Tensor& a, FwdFn fwd, DerFn der) {
  std::vector<double> storage(a.storage().size());
  const auto& x = a.storage();
  for (std::size_t i = 0; i < storage.size(); ++i) storage[i] = fwd(x[i]);
  return finish(name, {a}, a.shape(), a.dtype(), std::move(storage),
                [der](const Tensor& g, const std::vector<Tensor>& in) {
                  const auto& x = in[0].storage();
                  const auto& gv = g.storage();
                  std::vector<double> gs(x.size());
                  for (std::size_t i = 0; i < gs.size(); ++i) {
                    gs[i] = der(x[i]) * gv[i];
                  }
                  return std::vector<Tensor>{Tensor::from_storage(
                      in[0].shape(), Dtype::kReal64, std::move(gs))};
                });
}

}  // namespace

Tensor log(const Tensor& a) {
  require_real(a, "log");
  return real_unary(
      "log", a, [](double v) { return std::log(v); },
      [](double v) { return 1.0 / v; });
}

Tensor cos(const Tensor& a) {
  require_real(a, "cos");
  return real_unary(
      "cos", a, [](double v) { return std::cos(v); },
      [](double v) { return -std::sin(v); });
}

Tensor sin(const Tensor& a) {
  require_real(a, "sin");
  return real_unary(
      "sin", a, [](double v) { return std::sin(v); },
      [](double v) { return std::cos(v); });
}

// ---------------------------------------------------------- complex support

Tensor real(const Tensor& a) {
  const std::int64_t n = a.numel();
  std::vector<double> storage(a.re(), a.re() + n);
  return finish("real", {a}, a.shape(), Dtype::kReal64, std::move(storage),
                [](const Tensor& g, const std::vector<Tensor>& in) {
                  if (!in[0].is_complex()) return std::vector<Tensor>{g};
                  // d(Re z) seen from the paired-plane view: re <- g, im <- 0.
                  return std::vector<Tensor>{
                      make_complex(g, Tensor::zeros(g.shape()))};
                });
}

Tensor imag(const Tensor& a) {
  const std::int64_t n = a.numel();
  std::vector<double> storage(n, 0.0);
  if (a.is_complex()) storage.assign(a.im(), a.im() + n);
  return finish("imag", {a}, a.shape(), Dtype::kReal64, std::move(storage),
                [](const Tensor& g, const std::vector<Tensor>& in) {
                  if (!in[0].is_complex()) {
                    return std::vector<Tensor>{
                        Tensor::zeros(in[0].shape(), Dtype::kReal64)};
                  }
                  return std::vector<Tensor>{
                      make_complex(Tensor::zeros(g.shape()), g)};
                });
}

Tensor make_complex(const Tensor& re, const Tensor& im) {
  require_real(re, "make_complex");
  require_real(im, "make_complex");
  require_same(re, im, "make_complex");
  const std::int64_t n = re.numel();
  std::vector<double> storage(2 * n);
  std::copy(re.storage().begin(), re.storage().end(), storage.begin());
  std::copy(im.storage().begin(), im.storage().end(), storage.begin() + n);
  return finish("make_complex", {re, im}, re.shape(), Dtype::kComplex128,
                std::move(storage),
                [](const Tensor& g, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{real(g), imag(g)};
                });
}

Tensor to_complex(const Tensor& re) {
  require_real(re, "to_complex");
  const std::int64_t n = re.numel();
  std::vector<double> storage(2 * n, 0.0);
  std::copy(re.storage().begin(), re.storage().end(), storage.begin());
  return finish("to_complex", {re}, re.shape(), Dtype::kComplex128,
                std::move(storage),
                [](const Tensor& g, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{real(g)};
                });
}

Tensor conj(const Tensor& a) {
  if (!a.is_complex()) return a;
  const std::int64_t n = a.numel();
  std::vector<double> storage(a.storage());
  for (std::int64_t i = 0; i < n; ++i) storage[n + i] = -storage[n + i];
  return finish("conj", {a}, a.shape(), a.dtype(), std::move(storage),
                [](const Tensor& g, const std::vector<Tensor>&) {
                  return std::vector<Tensor>{conj(g)};
                });
}

Tensor abs2(const Tensor& a) {
  const std::int64_t n = a.numel();
  std::vector<double> storage(n);
  if (a.is_complex()) {
    const double *re = a.re(), *im = a.im();
    for (std::int64_t i = 0; i < n; ++i) {
      storage[i] = re[i] * re[i] + im[i] * im[i];
    }
  } else {
    const double* re = a.re();
    for (std::int64_t i = 0; i < n; ++i) storage[i] = re[i] * re[i];
  }
  return finish(
      "abs2", {a}, a.shape(), Dtype::kReal64, std::move(storage),
      [](const Tensor& g, const std::vector<Tensor>& in) {
        const Tensor& z = in[0];
        const std::int64_t n = z.numel();
        const auto& gv = g.storage();
        if (z.is_complex()) {
          // d|z|^2: re <- 2x g, im <- 2y g.
          std::vector<double> gs(2 * n);
          const double *re = z.re(), *im = z.im();
          for (std::int64_t i = 0; i < n; ++i) {
            gs[i] = 2.0 * re[i] * gv[i];
            gs[n + i] = 2.0 * im[i] * gv[i];
          }
          return std::vector<Tensor>{Tensor::from_storage(
              z.shape(), Dtype::kComplex128, std::move(gs))};
        }
        std::vector<double> gs(n);
        const double* re = z.re();
        for (std::int64_t i = 0; i < n; ++i) gs[i] = 2.0 * re[i] * gv[i];
        return std::vector<Tensor>{
            Tensor::from_storage(z.shape(), Dtype::kReal64, std::move(gs))};
      });
}

Tensor angle(const Tensor& a) {
  const std::int64_t n = a.numel();
  std::vector<double> storage(n);
  const double* re = a.re();
  const double* im = a.im();
  for (std::int64_t i = 0; i < n; ++i) {
    storage[i] = std::atan2(im ? im[i] : 0.0, re[i]);
  }
  return finish(
      "angle", {a}, a.shape(), Dtype::kReal64, std::move(storage),
      [](const Tensor& g, const std::vector<Tensor>& in) {
        const Tensor& z = in[0];
        const std::int64_t n = z.numel();
        if (!z.is_complex()) {
          return std::vector<Tensor>{Tensor::zeros(z.shape(), Dtype::kReal64)};
        }
        // datan2: re <- -y g / r^2, im <- x g / r^2 (zero at the origin).
        std::vector<double> gs(2 * n, 0.0);
        const auto& gv = g.storage();
        const double *re = z.re(), *im = z.im();
        for (std::int64_t i = 0; i < n; ++i) {
          const double r2 = re[i] * re[i] + im[i] * im[i];
          if (r2 > 0.0) {
            gs[i] = -im[i] * gv[i] / r2;
            gs[n + i] = re[i] * gv[i] / r2;
          }
        }
        return std::vector<Tensor>{Tensor::from_storage(
            z.shape(), Dtype::kComplex128, std::move(gs))};
      });
}

Tensor hermitian(const Tensor& a) { return conj(transpose2d(a)); }

// ------------------------------------------------------------------ select

Tensor where(const Tensor& mask, const Tensor& a, const Tensor& b) {
  require_real(mask, "where");
  require_same(a, b, "where");
  if (mask.shape() != a.shape()) {
    throw DimensionError("where: mask shape " + shape_str(mask.shape()) +
                         " differs from operand shape " +
                         shape_str(a.shape()));
  }
  if (mask.requires_grad()) {
    throw ContractError("where: mask must be a constant");
  }
  const std::int64_t n = a.numel();
  std::vector<double> storage(a.storage().size());
  const auto& mv = mask.storage();
  const auto& av = a.storage();
  const auto& bv = b.storage();
  for (std::int64_t i = 0; i < n; ++i) {
    storage[i] = mv[i] != 0.0 ? av[i] : bv[i];
  }
  if (a.is_complex()) {
    for (std::int64_t i = 0; i < n; ++i) {
      storage[n + i] = mv[i] != 0.0 ? av[n + i] : bv[n + i];
    }
  }
  const Tensor m = mask.detach();
  return finish(
      "where", {a, b}, a.shape(), a.dtype(), std::move(storage),
      [m](const Tensor& g, const std::vector<Tensor>& in) {
        const std::int64_t n = g.numel();
        const auto& mv = m.storage();
        const auto& gv = g.storage();
        std::vector<double> ga(gv.size(), 0.0), gb(gv.size(), 0.0);
        for (std::int64_t i = 0; i < n; ++i) {
          (mv[i] != 0.0 ? ga[i] : gb[i]) = gv[i];
        }
        if (g.is_complex()) {
          for (std::int64_t i = 0; i < n; ++i) {
            (mv[i] != 0.0 ? ga[n + i] : gb[n + i]) = gv[n + i];
          }
        }
        return std::vector<Tensor>{
            Tensor::from_storage(in[0].shape(), in[0].dtype(), std::move(ga)),
            Tensor::from_storage(in[1].shape(), in[1].dtype(), std::move(gb))};
      });
}

// ---------------------------------------------------------------- signal ops

Tensor overlap_add(const Tensor& frames, std::int64_t hop,
                   std::int64_t out_len) {
  require_real(frames, "overlap_add");
  if (frames.rank() < 2) {
    throw DimensionError("overlap_add: [..., T, N] required");
  }
  if (hop <= 0) throw InputError("overlap_add: hop must be positive");
  const std::int64_t num_frames = frames.dim(-2);
  const std::int64_t frame_len = frames.dim(-1);
  if ((num_frames - 1) * hop + frame_len > out_len) {
    throw DimensionError("overlap_add: frames exceed out_len");
  }
  std::int64_t batch = 1;
  Shape out_shape;
  for (int i = 0; i < frames.rank() - 2; ++i) {
    batch *= frames.dim(i);
    out_shape.push_back(frames.dim(i));
  }
  out_shape.push_back(out_len);
  std::vector<double> storage(batch * out_len, 0.0);
  const auto& fv = frames.storage();
  for (std::int64_t b = 0; b < batch; ++b) {
    const double* src = fv.data() + b * num_frames * frame_len;
    double* dst = storage.data() + b * out_len;
    for (std::int64_t t = 0; t < num_frames; ++t) {
      const double* fr = src + t * frame_len;
      double* d = dst + t * hop;
      for (std::int64_t j = 0; j < frame_len; ++j) d[j] += fr[j];
    }
  }
  return finish(
      "overlap_add", {frames}, std::move(out_shape), Dtype::kReal64,
      std::move(storage),
      [hop, num_frames, frame_len](const Tensor& g,
                                   const std::vector<Tensor>& in) {
        const std::int64_t out_len = g.dim(-1);
        const std::int64_t batch = g.numel() / out_len;
        std::vector<double> gs(in[0].storage().size());
        const auto& gv = g.storage();
        for (std::int64_t b = 0; b < batch; ++b) {
          const double* src = gv.data() + b * out_len;
          double* dst = gs.data() + b * num_frames * frame_len;
          for (std::int64_t t = 0; t < num_frames; ++t) {
            const double* s = src + t * hop;
            double* d = dst + t * frame_len;
            for (std::int64_t j = 0; j < frame_len; ++j) d[j] = s[j];
          }
        }
        return std::vector<Tensor>{Tensor::from_storage(
            in[0].shape(), Dtype::kReal64, std::move(gs))};
      });
}

Tensor irfft_frames(const Tensor& spec, std::int64_t n_fft) {
  if (!spec.is_complex()) {
    throw DimensionError("irfft_frames: complex input required");
  }
  if (n_fft <= 0 || n_fft % 2 != 0) {
    throw InputError("irfft_frames: n_fft must be even and positive");
  }
  const std::int64_t bins = n_fft / 2 + 1;
  if (spec.dim(-1) != bins) {
    throw DimensionError("irfft_frames: last axis must be n_fft/2 + 1");
  }
  const std::int64_t batch = spec.numel() / bins;
  Shape out_shape(spec.shape().begin(), spec.shape().end() - 1);
  out_shape.push_back(n_fft);
  std::vector<double> storage(batch * n_fft);
  const std::int64_t numel = spec.numel();
  std::vector<std::complex<double>> frame(bins);
  for (std::int64_t b = 0; b < batch; ++b) {
    const double* re = spec.re() + b * bins;
    const double* im = spec.re() + numel + b * bins;
    for (std::int64_t k = 0; k < bins; ++k) frame[k] = {re[k], im[k]};
    std::vector<double> x = fft::irfft(frame.data(), n_fft);
    std::copy(x.begin(), x.end(), storage.begin() + b * n_fft);
  }
  return finish(
      "irfft_frames", {spec}, std::move(out_shape), Dtype::kReal64,
      std::move(storage),
      [n_fft, bins](const Tensor& g, const std::vector<Tensor>& in) {
        // Adjoint of the one-sided inverse DFT: forward-transform the
        // cotangent and scale; DC/Nyquist keep only their real parts.
        const std::int64_t batch = g.numel() / n_fft;
        const std::int64_t in_numel = in[0].numel();
        std::vector<double> gs(in[0].storage().size(), 0.0);
        const auto& gv = g.storage();
        const double two_over_n = 2.0 / static_cast<double>(n_fft);
        const double one_over_n = 1.0 / static_cast<double>(n_fft);
        for (std::int64_t b = 0; b < batch; ++b) {
          auto spec_full = fft::rfft(gv.data() + b * n_fft,
                                     static_cast<std::size_t>(n_fft));
          double* out_re = gs.data() + b * bins;
          double* out_im = gs.data() + in_numel + b * bins;
          out_re[0] = one_over_n * spec_full[0].real();
          out_re[bins - 1] = one_over_n * spec_full[bins - 1].real();
          for (std::int64_t k = 1; k < bins - 1; ++k) {
            out_re[k] = two_over_n * spec_full[k].real();
            out_im[k] = two_over_n * spec_full[k].imag();
          }
        }
        return std::vector<Tensor>{Tensor::from_storage(
            in[0].shape(), Dtype::kComplex128, std::move(gs))};
      });
}

}  // namespace ops
}  // namespace asabf
