#pragma once

#include <utility>
#include <vector>

#include "kws/tape.hpp"

// Differentiable ops over tape nodes. All ops validate shapes up front and
// throw kws::Error on mismatch. 2-D tensors are [rows, cols]; the last
// axis is the feature axis.
namespace kws::nn {

template <typename T>
int constant(Tape<T>& t, Tensor<T> v);

// c = a + b (same shape)
template <typename T>
int add(Tape<T>& t, int a, int b);

// c = a * b elementwise (same shape)
template <typename T>
int mul(Tape<T>& t, int a, int b);

// y = alpha * x + beta
template <typename T>
int scale_add(Tape<T>& t, int x, T alpha, T beta);

// y[i,:] = x[i,:] + bias (bias is rank-1 [C])
template <typename T>
int add_rowvec(Tape<T>& t, int x, int bias);

template <typename T>
int relu(Tape<T>& t, int x);
template <typename T>
int sigmoid(Tape<T>& t, int x);
template <typename T>
int tanh_op(Tape<T>& t, int x);

// [m,k] x [n,k]^T -> [m,n]
template <typename T>
int matmul_nt(Tape<T>& t, int a, int b);
// [m,k] x [k,n] -> [m,n]
template <typename T>
int matmul_nn(Tape<T>& t, int a, int b);

// Affine map over the last axis: x [N,in] (or [in]), w [out,in], b [out]
// or -1 for no bias.
template <typename T>
int fc(Tape<T>& t, int x, int w, int b);

// rows [lo, hi) of x
template <typename T>
int slice_rows(Tape<T>& t, int x, int lo, int hi);
// columns [lo, hi) of x
template <typename T>
int slice_cols(Tape<T>& t, int x, int lo, int hi);
template <typename T>
int concat_rows(Tape<T>& t, const std::vector<int>& xs);
// append zero rows until the row count reaches `rows`
template <typename T>
int pad_rows(Tape<T>& t, int x, int rows);

template <typename T>
int mean_all(Tape<T>& t, int x);

// "same" zero padding of (k-1)/2, output length ceil(T/stride).
// x [T,Cin], kernel [k,Cin,Cout].
template <typename T>
int conv1d(Tape<T>& t, int x, int kernel, int stride);

// Transposed conv, no padding: output length (T-1)*stride + k.
// x [T,Cin], kernel [k,Cout,Cin].
template <typename T>
int tconv1d(Tape<T>& t, int x, int kernel, int stride);

// Lookup rows of `table` [V,E] by id; ids are not differentiable.
template <typename T>
int embedding(Tape<T>& t, const std::vector<int>& ids, int table);

// Row softmax of (logits + mask); mask entries are 0 (allowed) or a large
// negative surrogate for -inf. A row with every position masked is an error.
template <typename T>
int softmax_rows_masked(Tape<T>& t, int logits, const Tensor<T>& mask);

inline constexpr double kMaskNegInf = -1e9;

template <typename T>
Tensor<T> lower_triangular_mask(int n);
template <typename T>
Tensor<T> zero_mask(int rows, int cols);

// softmax(Q K^T / sqrt(d) + mask) V
template <typename T>
int attention(Tape<T>& t, int q, int k, int v, const Tensor<T>& mask);

// Mean binary cross entropy against constant labels y in {0,1};
// predictions clamped to [1e-7, 1 - 1e-7].
template <typename T>
int bce(Tape<T>& t, int p, const Tensor<T>& y);

// Running statistics owned by the layer, updated in train mode with
// momentum 0.99 and used directly in infer mode.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormState(int channels = 0)
      : running_mean(std::vector<int>{channels}),
        running_var(std::vector<int>{channels}, T(1)) {}
};

inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.99;

// x [N,C]; batch statistics over the N rows in train mode (N >= 2 required).
template <typename T>
int batchnorm(Tape<T>& t, int x, int gamma, int beta, BatchNormState<T>& state,
              bool train);

template <typename T>
struct GruWeights {
  int wx;   // [3H, X] input weights, gate order z, r, candidate
  int uzr;  // [2H, H] recurrent weights for z and r
  int uh;   // [H, H] recurrent weights for the candidate (applied to r*h)
  int b;    // [3H]
};

// z_t = sigma(Wz x + Uz h + bz); r_t = sigma(Wr x + Ur h + br);
// hc_t = tanh(Wh x + Uh (r*h) + bh); h_t = (1-z)*h + z*hc.
// Returns (outputs [T,H], h_T [1,H]). h0 is [1,H].
template <typename T>
std::pair<int, int> gru(Tape<T>& t, int x, int h0, const GruWeights<T>& w);

}  // namespace kws::nn
