#include "kws/optimizer.hpp"

#include <cmath>

#include "kws/error.hpp"

namespace kws::nn {

template <typename T>
void Adam<T>::step(const std::vector<Parameter<T>*>& params,
                   const std::vector<const Tensor<T>*>& grads) {
  if (params.size() != grads.size()) {
    throw Error("adam: parameter/gradient count mismatch");
  }
  ++t_;
  const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
  const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));

  for (size_t p = 0; p < params.size(); ++p) {
    Parameter<T>& param = *params[p];
    if (!param.trainable) continue;
    const Tensor<T>& g = *grads[p];
    if (!g.same_shape(param.value)) {
      throw Error("adam: gradient shape mismatch for " + param.name);
    }
    auto [it, inserted] = state_.try_emplace(param.name);
    Moments& mom = it->second;
    if (inserted) {
      mom.m = Tensor<T>(param.value.shape);
      mom.v = Tensor<T>(param.value.shape);
    }
    const size_t n = g.data.size();
    for (size_t i = 0; i < n; ++i) {
      const T gi = g.data[i];
      mom.m.data[i] = beta1_ * mom.m.data[i] + (T(1) - beta1_) * gi;
      mom.v.data[i] = beta2_ * mom.v.data[i] + (T(1) - beta2_) * gi * gi;
      const T mhat = mom.m.data[i] / bc1;
      const T vhat = mom.v.data[i] / bc2;
      param.value.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace kws::nn
