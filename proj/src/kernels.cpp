#include "kws/kernels.hpp"

#include "kws/error.hpp"
#include "kernels_impl.hpp"

namespace kws::simd {
namespace {

using detail::Vtable;

Backend detect() {
#if defined(KWS_HAVE_AVX2)
  if (detail::avx2_available()) return Backend::avx2;
#endif
#if defined(KWS_HAVE_NEON)
  return Backend::neon;
#endif
  return Backend::scalar;
}

const Vtable& vtable_for(Backend b) {
  switch (b) {
#if defined(KWS_HAVE_AVX2)
    case Backend::avx2:
      return detail::avx2_vtable();
#endif
#if defined(KWS_HAVE_NEON)
    case Backend::neon:
      return detail::neon_vtable();
#endif
    default:
      return detail::scalar_vtable();
  }
}

struct State {
  Backend backend;
  const Vtable* vt;
  State() : backend(detect()), vt(&vtable_for(backend)) {}
};

State& state() {
  static State s;
  return s;
}

}  // namespace

Backend active_backend() { return state().backend; }

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
    case Backend::neon:
      return "neon";
  }
  return "?";
}

bool backend_supported(Backend b) {
  if (b == Backend::scalar) return true;
#if defined(KWS_HAVE_AVX2)
  if (b == Backend::avx2) return detail::avx2_available();
#endif
#if defined(KWS_HAVE_NEON)
  if (b == Backend::neon) return true;
#endif
  return false;
}

void force_backend(Backend b) {
  if (!backend_supported(b)) {
    throw Error(std::string("kernel backend not supported on this CPU: ") +
                backend_name(b));
  }
  state().backend = b;
  state().vt = &vtable_for(b);
}

void reset_backend() {
  state().backend = detect();
  state().vt = &vtable_for(state().backend);
}

float dot(const float* a, const float* b, std::size_t n) {
  return state().vt->dot_f(a, b, n);
}
double dot(const double* a, const double* b, std::size_t n) {
  return state().vt->dot_d(a, b, n);
}
void axpy(float alpha, const float* x, float* y, std::size_t n) {
  state().vt->axpy_f(alpha, x, y, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  state().vt->axpy_d(alpha, x, y, n);
}
void add(const float* a, const float* b, float* out, std::size_t n) {
  state().vt->add_f(a, b, out, n);
}
void add(const double* a, const double* b, double* out, std::size_t n) {
  state().vt->add_d(a, b, out, n);
}
void mul(const float* a, const float* b, float* out, std::size_t n) {
  state().vt->mul_f(a, b, out, n);
}
void mul(const double* a, const double* b, double* out, std::size_t n) {
  state().vt->mul_d(a, b, out, n);
}
void scale(float alpha, float* x, std::size_t n) {
  state().vt->scale_f(alpha, x, n);
}
void scale(double alpha, double* x, std::size_t n) {
  state().vt->scale_d(alpha, x, n);
}

}  // namespace kws::simd
