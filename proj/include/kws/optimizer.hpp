#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kws/tensor.hpp"

namespace kws::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
};

// Bias-corrected Adam. Frozen parameters are never touched; moments are
// keyed by parameter name so optimizer state survives checkpointing.
template <typename T>
class Adam {
 public:
  struct Moments {
    Tensor<T> m;
    Tensor<T> v;
  };

  explicit Adam(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-7))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Parameter<T>*>& params,
            const std::vector<const Tensor<T>*>& grads);

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  T lr() const { return lr_; }

  std::map<std::string, Moments>& state() { return state_; }
  const std::map<std::string, Moments>& state() const { return state_; }

 private:
  T lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace kws::nn
