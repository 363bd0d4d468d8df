#include "kernels_impl.hpp"

// Reference kernels. Plain loops, no pragmas; these define the semantics
// the vectorized variants are tested against.
namespace kws::simd::detail {
namespace {

template <typename T>
T dot_ref(const T* a, const T* b, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy_ref(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void add_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul_ref(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void scale_ref(T alpha, T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

}  // namespace

const Vtable& scalar_vtable() {
  static const Vtable vt = {
      &dot_ref<float>,   &dot_ref<double>,  &axpy_ref<float>,
      &axpy_ref<double>, &add_ref<float>,   &add_ref<double>,
      &mul_ref<float>,   &mul_ref<double>,  &scale_ref<float>,
      &scale_ref<double>,
  };
  return vt;
}

}  // namespace kws::simd::detail
