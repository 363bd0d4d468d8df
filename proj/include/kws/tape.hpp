#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kws/error.hpp"
#include "kws/tensor.hpp"

namespace kws::nn {

// Reverse-mode tape. Ops append nodes in execution order; backward()
// seeds the loss gradient and walks the nodes exactly once in reverse,
// accumulating gradients additively. A tape describes one forward pass;
// build a fresh one per step.
template <typename T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated by backward() for nodes that need it
    bool needs_grad = false;
    std::function<void(Tape&)> backprop;
  };

  int push(Tensor<T> value, bool needs_grad,
           std::function<void(Tape&)> backprop = nullptr,
           const char* op_name = "op") {
    if (finite_checks_ && !value.all_finite()) {
      throw NumericError(std::string("non-finite value produced by '") +
                         op_name + "'");
    }
    nodes_.push_back(Node{std::move(value), Tensor<T>{}, needs_grad,
                          std::move(backprop)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int input(const Tensor<T>& v, bool needs_grad = false) {
    return push(v, needs_grad, nullptr, "input");
  }

  const Tensor<T>& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  Tensor<T>& grad(int id) { return nodes_[static_cast<size_t>(id)].grad; }
  const Tensor<T>& grad(int id) const { return nodes_[static_cast<size_t>(id)].grad; }
  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  void backward(int loss_id) {
    if (loss_id < 0 || loss_id >= static_cast<int>(nodes_.size())) {
      throw Error("backward: invalid node id");
    }
    if (val(loss_id).numel() != 1) {
      throw Error("backward: loss must be a scalar");
    }
    if (!nodes_[static_cast<size_t>(loss_id)].needs_grad) {
      throw Error("backward: loss does not depend on any differentiable input");
    }
    for (int i = 0; i <= loss_id; ++i) {
      auto& n = nodes_[static_cast<size_t>(i)];
      if (n.needs_grad) n.grad = Tensor<T>(n.value.shape);
    }
    grad(loss_id).data[0] = T(1);
    for (int i = loss_id; i >= 0; --i) {
      auto& n = nodes_[static_cast<size_t>(i)];
      if (n.needs_grad && n.backprop) n.backprop(*this);
    }
  }

  size_t size() const { return nodes_.size(); }

  void set_finite_checks(bool on) { finite_checks_ = on; }
  bool finite_checks() const { return finite_checks_; }

 private:
  std::vector<Node> nodes_;
  bool finite_checks_ = true;
};

}  // namespace kws::nn
