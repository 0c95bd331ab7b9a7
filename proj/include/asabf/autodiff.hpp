#ifndef ASABF_AUTODIFF_HPP_
#define ASABF_AUTODIFF_HPP_

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "asabf/tensor.hpp"

namespace asabf {
namespace autodiff {

// One recorded primitive. `vjp` maps the cotangent of the node's output to
// cotangents of its inputs (an undefined Tensor means "no gradient").
struct Node {
  std::string op;
  std::vector<Tensor> inputs;
  std::function<std::vector<Tensor>(const Tensor& grad_out,
                                    const std::vector<Tensor>& inputs)>
      vjp;
  const void* out_id = nullptr;
};

// Thread-local switch; while disabled, ops never record nodes.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class GradMap {
 public:
  bool contains(const Tensor& t) const;
  // Gradient of the loss w.r.t. `t`; zeros when `t` was not reached.
  Tensor get(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<const void*, Tensor> grads_;
};

// Linearized reverse-mode pass over the graph reachable from one root.
// The node order is topological (parents precede consumers) and fixed at
// construction; running it twice yields bitwise-identical gradients.
class Tape {
 public:
  static Tape record(const Tensor& root);
  GradMap backward() const;
  std::size_t size() const { return order_.size(); }

 private:
  Tensor root_;
  std::vector<const Node*> order_;
};

// Reverse-mode differentiation of a real scalar loss. Every requires_grad
// leaf reachable from `loss` receives its gradient in the returned map.
GradMap backward(const Tensor& loss);

// Builds an op node explicitly: `output_data` is the already-computed
// forward value. Used by primitives with hand-derived adjoints and by
// tests that need a deliberately broken rule.
Tensor custom_op(std::string name, std::vector<Tensor> inputs,
                 Tensor output_data,
                 std::function<std::vector<Tensor>(
                     const Tensor&, const std::vector<Tensor>&)>
                     vjp);

}  // namespace autodiff

// Max relative error between analytic gradients of f and central finite
// differences, taken over every real storage coordinate of every input.
// Complex inputs are perturbed plane-wise (Re and Im independently).
double grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, double eps = 1e-5);

}  // namespace asabf

#endif  // ASABF_AUTODIFF_HPP_
