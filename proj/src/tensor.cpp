#include "asabf/tensor.hpp"

#include <cmath>
#include <sstream>

#include "asabf/autodiff.hpp"
#include "asabf/errors.hpp"

namespace asabf {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t e : shape) {
    if (e < 0) throw DimensionError("negative extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

struct Tensor::Impl {
  Shape shape;
  Dtype dtype = Dtype::kReal64;
  std::shared_ptr<const std::vector<double>> data;
  bool requires_grad = false;
  std::shared_ptr<autodiff::Node> node;
};

Tensor Tensor::wrap(Shape shape, Dtype dtype,
                    std::shared_ptr<const std::vector<double>> data,
                    bool requires_grad, std::shared_ptr<autodiff::Node> node) {
  const std::int64_t n = shape_numel(shape);
  const std::int64_t want = dtype == Dtype::kComplex128 ? 2 * n : n;
  if (static_cast<std::int64_t>(data->size()) != want) {
    throw DimensionError("storage length " + std::to_string(data->size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  impl->node = std::move(node);
  return Tensor(std::shared_ptr<const Impl>(std::move(impl)));
}

Tensor Tensor::zeros(Shape shape, Dtype dtype) {
  const std::int64_t n = shape_numel(shape);
  auto data = std::make_shared<std::vector<double>>(
      dtype == Dtype::kComplex128 ? 2 * n : n, 0.0);
  return wrap(std::move(shape), dtype, std::move(data), false, nullptr);
}

Tensor Tensor::full(Shape shape, double value) {
  const std::int64_t n = shape_numel(shape);
  auto data = std::make_shared<std::vector<double>>(n, value);
  return wrap(std::move(shape), Dtype::kReal64, std::move(data), false,
              nullptr);
}

Tensor Tensor::scalar(double value) { return full({}, value); }

Tensor Tensor::from_real(Shape shape, std::vector<double> values) {
  auto data = std::make_shared<std::vector<double>>(std::move(values));
  return wrap(std::move(shape), Dtype::kReal64, std::move(data), false,
              nullptr);
}

Tensor Tensor::from_complex(Shape shape,
                            const std::vector<std::complex<double>>& values) {
  const std::size_t n = values.size();
  auto data = std::make_shared<std::vector<double>>(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    (*data)[i] = values[i].real();
    (*data)[n + i] = values[i].imag();
  }
  return wrap(std::move(shape), Dtype::kComplex128, std::move(data), false,
              nullptr);
}

Tensor Tensor::from_storage(Shape shape, Dtype dtype,
                            std::vector<double> storage) {
  auto data = std::make_shared<std::vector<double>>(std::move(storage));
  return wrap(std::move(shape), dtype, std::move(data), false, nullptr);
}

Tensor Tensor::eye(std::int64_t n, Dtype dtype) {
  const std::int64_t numel = n * n;
  std::vector<double> data(dtype == Dtype::kComplex128 ? 2 * numel : numel,
                           0.0);
  for (std::int64_t i = 0; i < n; ++i) data[i * n + i] = 1.0;
  return from_storage({n, n}, dtype, std::move(data));
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->shape;
}

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape()));
  }
  return impl_->shape[axis];
}

int Tensor::rank() const { return static_cast<int>(shape().size()); }

std::int64_t Tensor::numel() const { return shape_numel(shape()); }

Dtype Tensor::dtype() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->dtype;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

bool Tensor::is_leaf() const {
  return impl_ && impl_->requires_grad && impl_->node == nullptr;
}

const double* Tensor::re() const { return storage().data(); }

const double* Tensor::im() const {
  return is_complex() ? storage().data() + numel() : nullptr;
}

const std::vector<double>& Tensor::storage() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return *impl_->data;
}

double Tensor::at(std::int64_t i) const {
  if (is_complex()) throw ContractError("at() on complex tensor; use cat()");
  return storage()[static_cast<std::size_t>(i)];
}

std::complex<double> Tensor::cat(std::int64_t i) const {
  const auto& d = storage();
  if (is_complex()) {
    return {d[static_cast<std::size_t>(i)],
            d[static_cast<std::size_t>(numel() + i)]};
  }
  return {d[static_cast<std::size_t>(i)], 0.0};
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  if (is_complex()) throw ContractError("item() on complex tensor");
  return storage()[0];
}

Tensor Tensor::detach() const {
  if (!impl_) return Tensor();
  return wrap(impl_->shape, impl_->dtype, impl_->data, false, nullptr);
}

Tensor Tensor::variable() const {
  if (!impl_) throw ContractError("variable() on undefined tensor");
  return wrap(impl_->shape, impl_->dtype, impl_->data, true, nullptr);
}

Tensor Tensor::clone() const {
  if (!impl_) return Tensor();
  auto data = std::make_shared<std::vector<double>>(*impl_->data);
  return wrap(impl_->shape, impl_->dtype, std::move(data), false, nullptr);
}

const void* Tensor::id() const { return impl_.get(); }

const std::shared_ptr<autodiff::Node>& Tensor::node() const {
  static const std::shared_ptr<autodiff::Node> kNull;
  return impl_ ? impl_->node : kNull;
}

bool Tensor::all_finite() const {
  for (double v : storage()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor make_op_output(Shape shape, Dtype dtype, std::vector<double> storage,
                      std::shared_ptr<autodiff::Node> node) {
  auto data = std::make_shared<std::vector<double>>(std::move(storage));
  const bool rg = node != nullptr;
  Tensor out = Tensor::wrap(std::move(shape), dtype, std::move(data), rg, node);
  if (node) node->out_id = out.id();
  return out;
}

}  // namespace asabf
