#pragma once

#include <cstddef>

// Internal: per-backend kernel entry points wired up by the dispatcher.
namespace kws::simd::detail {

struct Vtable {
  float (*dot_f)(const float*, const float*, std::size_t);
  double (*dot_d)(const double*, const double*, std::size_t);
  void (*axpy_f)(float, const float*, float*, std::size_t);
  void (*axpy_d)(double, const double*, double*, std::size_t);
  void (*add_f)(const float*, const float*, float*, std::size_t);
  void (*add_d)(const double*, const double*, double*, std::size_t);
  void (*mul_f)(const float*, const float*, float*, std::size_t);
  void (*mul_d)(const double*, const double*, double*, std::size_t);
  void (*scale_f)(float, float*, std::size_t);
  void (*scale_d)(double, double*, std::size_t);
};

const Vtable& scalar_vtable();

#if defined(KWS_HAVE_AVX2)
const Vtable& avx2_vtable();
bool avx2_available();
#endif

#if defined(KWS_HAVE_NEON)
const Vtable& neon_vtable();
#endif

}  // namespace kws::simd::detail
