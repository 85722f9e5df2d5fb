#include "cmask/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace cmask {

namespace detail {

namespace {
std::atomic<uint64_t> g_seq{1};
thread_local bool g_grad_enabled = true;

size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ParamError("tensor: negative dimension");
    n *= static_cast<size_t>(d);
  }
  return n;
}
}  // namespace

NodePtr make_node(std::vector<int> shape) {
  auto n = std::make_shared<Node>();
  n->value.assign(shape_numel(shape), 0.0);
  n->shape = std::move(shape);
  n->seq = g_seq.fetch_add(1);
  return n;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

}  // namespace detail

using detail::Node;
using detail::NodePtr;

Tensor Tensor::zeros(const std::vector<int>& shape, bool requires_grad) {
  auto n = detail::make_node(shape);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from_values(const std::vector<int>& shape, std::vector<double> values,
                           bool requires_grad) {
  auto n = detail::make_node(shape);
  if (values.size() != n->value.size())
    throw ParamError("tensor: value count does not match shape");
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

const std::vector<int>& Tensor::shape() const {
  if (!n_) throw ParamError("tensor: undefined");
  return n_->shape;
}

int Tensor::ndim() const { return static_cast<int>(shape().size()); }

int Tensor::dim(int i) const {
  const auto& s = shape();
  if (i < 0 || i >= static_cast<int>(s.size())) throw ParamError("tensor: dim out of range");
  return s[i];
}

size_t Tensor::numel() const {
  if (!n_) throw ParamError("tensor: undefined");
  return n_->value.size();
}

std::vector<double>& Tensor::value() {
  if (!n_) throw ParamError("tensor: undefined");
  return n_->value;
}

const std::vector<double>& Tensor::value() const {
  if (!n_) throw ParamError("tensor: undefined");
  return n_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ParamError("tensor: item() needs a scalar");
  return n_->value[0];
}

bool Tensor::requires_grad() const { return n_ && n_->requires_grad; }

bool Tensor::has_grad() const { return n_ && !n_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) throw ParamError("tensor: no gradient accumulated");
  return n_->grad;
}

void Tensor::zero_grad() {
  if (n_) n_->grad.clear();
}

void Tensor::backward() {
  if (!n_) throw ParamError("backward: undefined tensor");
  if (n_->value.size() != 1) throw ParamError("backward: root must be a scalar");
  if (!n_->requires_grad) throw ParamError("backward: root does not require grad");

  // Collect reachable grad-requiring nodes, then sweep in descending seq.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{n_.get()};
  seen.insert(n_.get());
  while (!stack.empty()) {
    Node* cur = stack.back();
    stack.pop_back();
    order.push_back(cur);
    for (const auto& p : cur->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->seq > b->seq; });

  n_->ensure_grad()[0] = 1.0;
  for (Node* node : order) {
    if (node->backward_fn && !node->grad.empty()) node->backward_fn();
  }
}

namespace {

// Wires the bookkeeping shared by every op: propagate requires_grad, record
// parents and the pull-based backward closure (only while recording is on).
Tensor finish_op(NodePtr out, std::initializer_list<NodePtr> parents,
                 std::function<void()> backward_fn) {
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (detail::grad_enabled() && any) {
    out->requires_grad = true;
    out->parents.assign(parents.begin(), parents.end());
    out->backward_fn = std::move(backward_fn);
  }
  return Tensor(out);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) throw ParamError(std::string(what) + ": shape mismatch");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  NodePtr an = a.node(), bn = b.node();
  NodePtr out = detail::make_node(an->shape);
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = an->value[i] + bn->value[i];
  Node* self = out.get();
  return finish_op(out, {an, bn}, [self, an, bn]() {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  NodePtr an = a.node(), bn = b.node();
  NodePtr out = detail::make_node(an->shape);
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = an->value[i] - bn->value[i];
  Node* self = out.get();
  return finish_op(out, {an, bn}, [self, an, bn]() {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] -= self->grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  NodePtr an = a.node(), bn = b.node();
  NodePtr out = detail::make_node(an->shape);
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = an->value[i] * bn->value[i];
  Node* self = out.get();
  return finish_op(out, {an, bn}, [self, an, bn]() {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self->grad[i] * an->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  NodePtr an = a.node();
  if (!an) throw ParamError("scale: undefined tensor");
  NodePtr out = detail::make_node(an->shape);
  for (size_t i = 0; i < out->value.size(); ++i) out->value[i] = s * an->value[i];
  Node* self = out.get();
  return finish_op(out, {an}, [self, an, s]() {
    auto& g = an->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += s * self->grad[i];
  });
}

Tensor sum(const Tensor& a) {
  NodePtr an = a.node();
  if (!an) throw ParamError("sum: undefined tensor");
  NodePtr out = detail::make_node({});
  double s = 0.0;
  for (double v : an->value) s += v;
  out->value[0] = s;
  Node* self = out.get();
  return finish_op(out, {an}, [self, an]() {
    auto& g = an->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g[i] += self->grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ParamError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

}  // namespace cmask
