#ifndef ASABF_TENSOR_HPP_
#define ASABF_TENSOR_HPP_

#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace asabf {

namespace autodiff {
struct Node;
}

enum class Dtype { kReal64, kComplex128 };

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense real64/complex128 tensor with row-major storage. A complex tensor
// keeps two planes in one buffer: [re(0..n-1), im(0..n-1)], each row-major.
// Data is immutable after construction; handles share storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, Dtype dtype = Dtype::kReal64);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_real(Shape shape, std::vector<double> values);
  static Tensor from_complex(Shape shape,
                             const std::vector<std::complex<double>>& values);
  // Raw-plane constructor; storage size must be numel (real) or 2*numel.
  static Tensor from_storage(Shape shape, Dtype dtype,
                             std::vector<double> storage);
  static Tensor eye(std::int64_t n, Dtype dtype = Dtype::kReal64);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(int axis) const;  // negative axes allowed
  int rank() const;
  std::int64_t numel() const;
  Dtype dtype() const;
  bool is_complex() const { return dtype() == Dtype::kComplex128; }
  bool requires_grad() const;
  bool is_leaf() const;  // requires_grad and not produced by an op

  // Plane access. im() is null for real tensors.
  const double* re() const;
  const double* im() const;
  const std::vector<double>& storage() const;

  double at(std::int64_t i) const;                 // real tensors
  std::complex<double> cat(std::int64_t i) const;  // either dtype
  double item() const;                             // real scalar

  // New handle sharing this tensor's data, detached from the graph.
  Tensor detach() const;
  // New leaf handle sharing this tensor's data, flagged for gradients.
  Tensor variable() const;
  // New tensor with the same data in a fresh buffer (new identity).
  Tensor clone() const;

  // Stable identity used as the key in gradient maps.
  const void* id() const;
  const std::shared_ptr<autodiff::Node>& node() const;

  bool all_finite() const;

 private:
  friend Tensor make_op_output(Shape shape, Dtype dtype,
                               std::vector<double> storage,
                               std::shared_ptr<autodiff::Node> node);
  struct Impl;
  static Tensor wrap(Shape shape, Dtype dtype,
                     std::shared_ptr<const std::vector<double>> data,
                     bool requires_grad, std::shared_ptr<autodiff::Node> node);
  explicit Tensor(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

// Internal: builds an op output carrying an autodiff node (may be null).
Tensor make_op_output(Shape shape, Dtype dtype, std::vector<double> storage,
                      std::shared_ptr<autodiff::Node> node);

}  // namespace asabf

#endif  // ASABF_TENSOR_HPP_
