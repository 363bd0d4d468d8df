#pragma once

#include <cstddef>

// Data-parallel inner loops behind the tensor ops. Every kernel has a
// scalar reference implementation; AVX2 (x86-64) and NEON (aarch64)
// variants are selected at runtime and equivalence-tested against the
// reference.
namespace kws::simd {

enum class Backend { scalar, avx2, neon };

Backend active_backend();
const char* backend_name(Backend b);
bool backend_supported(Backend b);

// Pin a backend (tests pin `scalar` to produce reference values).
// Throws kws::Error if the CPU does not support it.
void force_backend(Backend b);
void reset_backend();

float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);

// y += alpha * x
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

// out = a + b, out = a * b (elementwise; aliasing with inputs allowed)
void add(const float* a, const float* b, float* out, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void mul(const float* a, const float* b, float* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);

// x *= alpha
void scale(float alpha, float* x, std::size_t n);
void scale(double alpha, double* x, std::size_t n);

}  // namespace kws::simd
