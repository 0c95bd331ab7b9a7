#include "asabf/autodiff.hpp"

#include <cmath>
#include <unordered_set>

#include "asabf/errors.hpp"
#include "asabf/ops.hpp"

namespace asabf {
namespace autodiff {

namespace {
thread_local bool g_grad_enabled = true;

// Numeric in-place accumulation of cotangents (same shape/dtype).
Tensor accumulate(const Tensor& acc, const Tensor& g) {
  if (!acc.defined()) return g;
  if (acc.shape() != g.shape() || acc.dtype() != g.dtype()) {
    throw ContractError("cotangent mismatch: " + shape_str(acc.shape()) +
                        " vs " + shape_str(g.shape()));
  }
  std::vector<double> out = acc.storage();
  const auto& add = g.storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += add[i];
  return Tensor::from_storage(acc.shape(), acc.dtype(), std::move(out));
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool GradMap::contains(const Tensor& t) const {
  return grads_.count(t.id()) > 0;
}

Tensor GradMap::get(const Tensor& t) const {
  auto it = grads_.find(t.id());
  if (it != grads_.end()) return it->second;
  return Tensor::zeros(t.shape(), t.dtype());
}

Tape Tape::record(const Tensor& root) {
  Tape tape;
  tape.root_ = root;
  if (!root.node()) return tape;

  // Iterative post-order DFS: parents end up before their consumers.
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<const Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next_input] = stack.back();
    bool descended = false;
    while (next_input < node->inputs.size()) {
      const auto& in = node->inputs[next_input++];
      const Node* child = in.node().get();
      if (child && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
        descended = true;
        break;
      }
    }
    if (!descended && next_input >= node->inputs.size()) {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

GradMap Tape::backward() const {
  if (!root_.defined()) throw ContractError("backward on undefined tensor");
  if (root_.numel() != 1 || root_.is_complex()) {
    throw ContractError("backward requires a real scalar loss, got " +
                        shape_str(root_.shape()));
  }
  NoGradGuard no_grad;
  GradMap result;
  std::unordered_map<const void*, Tensor> acc;
  acc[root_.id()] = Tensor::full(root_.shape(), 1.0);

  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    const Node* node = *it;
    auto git = acc.find(node->out_id);
    if (git == acc.end()) continue;
    Tensor g = git->second;
    acc.erase(git);
    std::vector<Tensor> gs = node->vjp(g, node->inputs);
    if (gs.size() != node->inputs.size()) {
      throw ContractError("vjp of " + node->op + " returned " +
                          std::to_string(gs.size()) + " cotangents for " +
                          std::to_string(node->inputs.size()) + " inputs");
    }
    for (std::size_t i = 0; i < gs.size(); ++i) {
      if (!gs[i].defined()) continue;
      const Tensor& in = node->inputs[i];
      if (!in.requires_grad()) continue;
      auto ait = acc.find(in.id());
      acc[in.id()] = accumulate(ait == acc.end() ? Tensor() : ait->second,
                                gs[i]);
    }
  }
  // Whatever is left belongs to leaves (interior accumulators were erased
  // as they were consumed).
  result.grads_ = std::move(acc);
  return result;
}

GradMap backward(const Tensor& loss) { return Tape::record(loss).backward(); }

Tensor custom_op(std::string name, std::vector<Tensor> inputs,
                 Tensor output_data,
                 std::function<std::vector<Tensor>(
                     const Tensor&, const std::vector<Tensor>&)>
                     vjp) {
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  std::shared_ptr<Node> node;
  if (needs_grad) {
    node = std::make_shared<Node>();
    node->op = std::move(name);
    node->inputs = std::move(inputs);
    node->vjp = std::move(vjp);
  }
  return make_op_output(output_data.shape(), output_data.dtype(),
                        output_data.storage(), std::move(node));
}

}  // namespace autodiff

double grad_check(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw InputError("grad_check eps must lie in (0, 1e-2]");
  }

  // Analytic pass with leaf variables.
  std::vector<Tensor> vars;
  vars.reserve(inputs.size());
  for (const auto& in : inputs) vars.push_back(in.detach().variable());
  Tensor loss = f(vars);
  if (loss.numel() != 1 || loss.is_complex()) {
    throw ContractError("grad_check expects a real scalar-valued function");
  }
  if (!loss.all_finite()) throw NumericError("non-finite loss in grad_check");
  autodiff::GradMap grads = autodiff::backward(loss);

  auto eval = [&](const std::vector<Tensor>& xs) {
    autodiff::NoGradGuard no_grad;
    const double v = f(xs).item();
    if (!std::isfinite(v)) throw NumericError("non-finite value in grad_check");
    return v;
  };

  double max_rel = 0.0;
  for (std::size_t vi = 0; vi < vars.size(); ++vi) {
    const Tensor analytic = grads.get(vars[vi]);
    const auto& base = vars[vi].storage();
    for (std::size_t k = 0; k < base.size(); ++k) {
      std::vector<Tensor> pert = vars;
      std::vector<double> bumped = base;
      bumped[k] = base[k] + eps;
      pert[vi] = Tensor::from_storage(vars[vi].shape(), vars[vi].dtype(),
                                      std::move(bumped));
      const double fp = eval(pert);
      bumped = base;
      bumped[k] = base[k] - eps;
      pert[vi] = Tensor::from_storage(vars[vi].shape(), vars[vi].dtype(),
                                      std::move(bumped));
      const double fm = eval(pert);
      const double cd = (fp - fm) / (2.0 * eps);
      const double an = analytic.storage()[k];
      const double rel = std::abs(an - cd) /
                         std::max({std::abs(an), std::abs(cd), 1e-12});
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace asabf
