#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "cmask/errors.hpp"

namespace cmask {

namespace detail {

// One value in the dynamic compute graph. `backward_fn` pulls this node's
// gradient into its parents' gradients; parents are held alive through
// shared_ptr so a root tensor keeps its whole history reachable.
struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  uint64_t seq = 0;  // creation order; children always outnumber parents
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(std::vector<int> shape);

// Graph recording switch. With recording off, ops compute values but attach
// no parents or backward functions, so eval-mode intermediates die early.
bool grad_enabled();
void set_grad_enabled(bool on);

class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(detail::NodePtr n) : n_(std::move(n)) {}

  static Tensor zeros(const std::vector<int>& shape, bool requires_grad = false);
  static Tensor from_values(const std::vector<int>& shape, std::vector<double> values,
                            bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const std::vector<int>& shape() const;
  int ndim() const;
  int dim(int i) const;
  size_t numel() const;

  std::vector<double>& value();
  const std::vector<double>& value() const;
  double item() const;  // scalar tensors only

  bool requires_grad() const;
  bool has_grad() const;
  const std::vector<double>& grad() const;
  void zero_grad();

  // Reverse sweep from a scalar root. Seeds d(root)/d(root) = 1 and runs every
  // recorded backward function in reverse creation order, which is a valid
  // reverse topological order because parents always precede children.
  void backward();

  detail::NodePtr node() const { return n_; }

 private:
  detail::NodePtr n_;
};

// Elementwise graph ops (matching shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar

}  // namespace cmask
