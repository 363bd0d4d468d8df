#include "kws/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kws/kernels.hpp"

// Closure pattern: the output node id equals tape.size() at build time, so
// each op captures `out` before pushing and reads its own gradient from it.
// Closures only accumulate into inputs that need gradients.
namespace kws::nn {
namespace {

template <typename T>
using Fn = std::function<void(Tape<T>&)>;

template <typename T>
void check_2d(const Tensor<T>& x, const char* op) {
  if (x.rank() != 2) {
    throw Error(std::string(op) + ": expected 2-D tensor, got " + x.shape_str());
  }
}

}  // namespace

template <typename T>
int constant(Tape<T>& t, Tensor<T> v) {
  return t.push(std::move(v), false, nullptr, "constant");
}

template <typename T>
int add(Tape<T>& t, int a, int b) {
  const auto& va = t.val(a);
  const auto& vb = t.val(b);
  if (!va.same_shape(vb)) {
    throw Error("add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
  }
  Tensor<T> out(va.shape);
  simd::add(va.data.data(), vb.data.data(), out.data.data(), out.data.size());
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [a, b, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      if (tp.needs_grad(a)) {
        simd::axpy(T(1), g.data.data(), tp.grad(a).data.data(), g.data.size());
      }
      if (tp.needs_grad(b)) {
        simd::axpy(T(1), g.data.data(), tp.grad(b).data.data(), g.data.size());
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "add");
}

template <typename T>
int mul(Tape<T>& t, int a, int b) {
  const auto& va = t.val(a);
  const auto& vb = t.val(b);
  if (!va.same_shape(vb)) {
    throw Error("mul: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
  }
  Tensor<T> out(va.shape);
  simd::mul(va.data.data(), vb.data.data(), out.data.data(), out.data.size());
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [a, b, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      const size_t n = g.data.size();
      if (tp.needs_grad(a)) {
        const auto& vb2 = tp.val(b);
        auto& ga = tp.grad(a);
        for (size_t i = 0; i < n; ++i) ga.data[i] += g.data[i] * vb2.data[i];
      }
      if (tp.needs_grad(b)) {
        const auto& va2 = tp.val(a);
        auto& gb = tp.grad(b);
        for (size_t i = 0; i < n; ++i) gb.data[i] += g.data[i] * va2.data[i];
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "mul");
}

template <typename T>
int scale_add(Tape<T>& t, int x, T alpha, T beta) {
  const auto& vx = t.val(x);
  Tensor<T> out(vx.shape);
  for (size_t i = 0; i < vx.data.size(); ++i) out.data[i] = alpha * vx.data[i] + beta;
  const bool ng = t.needs_grad(x);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [x, alpha, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      simd::axpy(alpha, g.data.data(), tp.grad(x).data.data(), g.data.size());
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "scale_add");
}

template <typename T>
int add_rowvec(Tape<T>& t, int x, int bias) {
  const auto& vx = t.val(x);
  const auto& vb = t.val(bias);
  check_2d(vx, "add_rowvec");
  if (vb.rank() != 1 || vb.shape[0] != vx.shape[1]) {
    throw Error("add_rowvec: bias shape " + vb.shape_str() + " does not match " + vx.shape_str());
  }
  const int rows = vx.shape[0], cols = vx.shape[1];
  Tensor<T> out(vx.shape);
  for (int i = 0; i < rows; ++i) {
    simd::add(vx.row_ptr(i), vb.data.data(), out.row_ptr(i), static_cast<size_t>(cols));
  }
  const bool ng = t.needs_grad(x) || t.needs_grad(bias);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [x, bias, rows, cols, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      if (tp.needs_grad(x)) {
        simd::axpy(T(1), g.data.data(), tp.grad(x).data.data(), g.data.size());
      }
      if (tp.needs_grad(bias)) {
        auto& gb = tp.grad(bias);
        for (int i = 0; i < rows; ++i) {
          simd::axpy(T(1), g.row_ptr(i), gb.data.data(), static_cast<size_t>(cols));
        }
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "add_rowvec");
}

template <typename T>
int relu(Tape<T>& t, int x) {
  const auto& vx = t.val(x);
  Tensor<T> out(vx.shape);
  for (size_t i = 0; i < vx.data.size(); ++i) out.data[i] = vx.data[i] > T(0) ? vx.data[i] : T(0);
  const bool ng = t.needs_grad(x);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [x, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      const auto& vx2 = tp.val(x);
      auto& gx = tp.grad(x);
      for (size_t i = 0; i < g.data.size(); ++i) {
        if (vx2.data[i] > T(0)) gx.data[i] += g.data[i];
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "relu");
}

template <typename T>
int sigmoid(Tape<T>& t, int x) {
  const auto& vx = t.val(x);
  Tensor<T> out(vx.shape);
  for (size_t i = 0; i < vx.data.size(); ++i) {
    out.data[i] = T(1) / (T(1) + std::exp(-vx.data[i]));
  }
  const bool ng = t.needs_grad(x);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [x, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      const auto& y = tp.val(self);
      auto& gx = tp.grad(x);
      for (size_t i = 0; i < g.data.size(); ++i) {
        gx.data[i] += g.data[i] * y.data[i] * (T(1) - y.data[i]);
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "sigmoid");
}

template <typename T>
int tanh_op(Tape<T>& t, int x) {
  const auto& vx = t.val(x);
  Tensor<T> out(vx.shape);
  for (size_t i = 0; i < vx.data.size(); ++i) out.data[i] = std::tanh(vx.data[i]);
  const bool ng = t.needs_grad(x);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [x, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      const auto& y = tp.val(self);
      auto& gx = tp.grad(x);
      for (size_t i = 0; i < g.data.size(); ++i) {
        gx.data[i] += g.data[i] * (T(1) - y.data[i] * y.data[i]);
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "tanh");
}

template <typename T>
int matmul_nt(Tape<T>& t, int a, int b) {
  const auto& va = t.val(a);
  const auto& vb = t.val(b);
  check_2d(va, "matmul_nt");
  check_2d(vb, "matmul_nt");
  if (va.shape[1] != vb.shape[1]) {
    throw Error("matmul_nt: inner extents differ, " + va.shape_str() + " vs " + vb.shape_str());
  }
  const int m = va.shape[0], n = vb.shape[0], k = va.shape[1];
  Tensor<T> out(std::vector<int>{m, n});
  for (int i = 0; i < m; ++i) {
    const T* arow = va.row_ptr(i);
    T* orow = out.row_ptr(i);
    for (int j = 0; j < n; ++j) {
      orow[j] = simd::dot(arow, vb.row_ptr(j), static_cast<size_t>(k));
    }
  }
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [a, b, m, n, k, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      if (tp.needs_grad(a)) {
        auto& ga = tp.grad(a);
        const auto& vb2 = tp.val(b);
        for (int i = 0; i < m; ++i) {
          const T* grow = g.row_ptr(i);
          T* garow = ga.row_ptr(i);
          for (int j = 0; j < n; ++j) {
            if (grow[j] != T(0)) {
              simd::axpy(grow[j], vb2.row_ptr(j), garow, static_cast<size_t>(k));
            }
          }
        }
      }
      if (tp.needs_grad(b)) {
        auto& gb = tp.grad(b);
        const auto& va2 = tp.val(a);
        for (int i = 0; i < m; ++i) {
          const T* grow = g.row_ptr(i);
          const T* arow = va2.row_ptr(i);
          for (int j = 0; j < n; ++j) {
            if (grow[j] != T(0)) {
              simd::axpy(grow[j], arow, gb.row_ptr(j), static_cast<size_t>(k));
            }
          }
        }
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "matmul_nt");
}

template <typename T>
int matmul_nn(Tape<T>& t, int a, int b) {
  const auto& va = t.val(a);
  const auto& vb = t.val(b);
  check_2d(va, "matmul_nn");
  check_2d(vb, "matmul_nn");
  if (va.shape[1] != vb.shape[0]) {
    throw Error("matmul_nn: inner extents differ, " + va.shape_str() + " vs " + vb.shape_str());
  }
  const int m = va.shape[0], k = va.shape[1], n = vb.shape[1];
  Tensor<T> out(std::vector<int>{m, n});
  for (int i = 0; i < m; ++i) {
    const T* arow = va.row_ptr(i);
    T* orow = out.row_ptr(i);
    for (int l = 0; l < k; ++l) {
      if (arow[l] != T(0)) {
        simd::axpy(arow[l], vb.row_ptr(l), orow, static_cast<size_t>(n));
      }
    }
  }
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [a, b, m, k, n, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      if (tp.needs_grad(a)) {
        auto& ga = tp.grad(a);
        const auto& vb2 = tp.val(b);
        for (int i = 0; i < m; ++i) {
          const T* grow = g.row_ptr(i);
          T* garow = ga.row_ptr(i);
          for (int l = 0; l < k; ++l) {
            garow[l] += simd::dot(grow, vb2.row_ptr(l), static_cast<size_t>(n));
          }
        }
      }
      if (tp.needs_grad(b)) {
        auto& gb = tp.grad(b);
        const auto& va2 = tp.val(a);
        for (int i = 0; i < m; ++i) {
          const T* grow = g.row_ptr(i);
          const T* arow = va2.row_ptr(i);
          for (int l = 0; l < k; ++l) {
            if (arow[l] != T(0)) {
              simd::axpy(arow[l], grow, gb.row_ptr(l), static_cast<size_t>(n));
            }
          }
        }
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "matmul_nn");
}

template <typename T>
int fc(Tape<T>& t, int x, int w, int b) {
  int xn = x;
  const bool was_1d = t.val(x).rank() == 1;
  if (was_1d) {
    Tensor<T> v = t.val(x);
    // treat a lone vector as a single row; gradient flows through slice-free
    // reshape below
    const int n = v.shape[0];
    const int self = static_cast<int>(t.size());
    Tensor<T> row = Tensor<T>::from({1, n}, v.data);
    Fn<T> bp;
    if (t.needs_grad(x)) {
      bp = [x, self](Tape<T>& tp) {
        const auto& g = tp.grad(self);
        simd::axpy(T(1), g.data.data(), tp.grad(x).data.data(), g.data.size());
      };
    }
    xn = t.push(std::move(row), t.needs_grad(x), std::move(bp), "reshape");
  }
  const int y = matmul_nt(t, xn, w);
  int out = (b >= 0) ? add_rowvec(t, y, b) : y;
  if (was_1d) {
    const auto& v = t.val(out);
    const int n = v.shape[1];
    const int prev = out;
    const int self = static_cast<int>(t.size());
    Tensor<T> flat = Tensor<T>::from({n}, v.data);
    Fn<T> bp;
    if (t.needs_grad(prev)) {
      bp = [prev, self](Tape<T>& tp) {
        const auto& g = tp.grad(self);
        simd::axpy(T(1), g.data.data(), tp.grad(prev).data.data(), g.data.size());
      };
    }
    out = t.push(std::move(flat), t.needs_grad(prev), std::move(bp), "reshape");
  }
  return out;
}

template <typename T>
int slice_rows(Tape<T>& t, int x, int lo, int hi) {
  const auto& vx = t.val(x);
  check_2d(vx, "slice_rows");
  if (lo < 0 || hi > vx.shape[0] || lo >= hi) throw Error("slice_rows: bad range");
  const int cols = vx.shape[1];
  Tensor<T> out(std::vector<int>{hi - lo, cols});
  std::copy(vx.row_ptr(lo), vx.row_ptr(lo) + static_cast<size_t>(hi - lo) * cols,
            out.data.begin());
  const bool ng = t.needs_grad(x);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [x, lo, cols, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      auto& gx = tp.grad(x);
      simd::axpy(T(1), g.data.data(), gx.row_ptr(lo), g.data.size());
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "slice_rows");
}

template <typename T>
int slice_cols(Tape<T>& t, int x, int lo, int hi) {
  const auto& vx = t.val(x);
  check_2d(vx, "slice_cols");
  if (lo < 0 || hi > vx.shape[1] || lo >= hi) throw Error("slice_cols: bad range");
  const int rows = vx.shape[0], w = hi - lo;
  Tensor<T> out(std::vector<int>{rows, w});
  for (int i = 0; i < rows; ++i) {
    std::copy(vx.row_ptr(i) + lo, vx.row_ptr(i) + hi, out.row_ptr(i));
  }
  const bool ng = t.needs_grad(x);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [x, lo, rows, w, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      auto& gx = tp.grad(x);
      for (int i = 0; i < rows; ++i) {
        simd::axpy(T(1), g.row_ptr(i), gx.row_ptr(i) + lo, static_cast<size_t>(w));
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "slice_cols");
}

template <typename T>
int concat_rows(Tape<T>& t, const std::vector<int>& xs) {
  if (xs.empty()) throw Error("concat_rows: no inputs");
  const int cols = t.val(xs[0]).cols();
  int rows = 0;
  bool ng = false;
  for (int id : xs) {
    const auto& v = t.val(id);
    check_2d(v, "concat_rows");
    if (v.shape[1] != cols) throw Error("concat_rows: column mismatch");
    rows += v.shape[0];
    ng = ng || t.needs_grad(id);
  }
  Tensor<T> out(std::vector<int>{rows, cols});
  int at = 0;
  for (int id : xs) {
    const auto& v = t.val(id);
    std::copy(v.data.begin(), v.data.end(), out.row_ptr(at));
    at += v.shape[0];
  }
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    std::vector<int> inputs = xs;
    bp = [inputs, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      int row = 0;
      for (int id : inputs) {
        const auto& v = tp.val(id);
        if (tp.needs_grad(id)) {
          simd::axpy(T(1), g.row_ptr(row), tp.grad(id).data.data(), v.data.size());
        }
        row += v.shape[0];
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "concat_rows");
}

template <typename T>
int pad_rows(Tape<T>& t, int x, int rows) {
  const auto& vx = t.val(x);
  check_2d(vx, "pad_rows");
  if (rows < vx.shape[0]) throw Error("pad_rows: target smaller than input");
  if (rows == vx.shape[0]) return x;
  Tensor<T> out(std::vector<int>{rows, vx.shape[1]});
  std::copy(vx.data.begin(), vx.data.end(), out.data.begin());
  const bool ng = t.needs_grad(x);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    const size_t n = vx.data.size();
    bp = [x, n, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      simd::axpy(T(1), g.data.data(), tp.grad(x).data.data(), n);
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "pad_rows");
}

template <typename T>
int mean_all(Tape<T>& t, int x) {
  const auto& vx = t.val(x);
  if (vx.numel() == 0) throw Error("mean_all: empty tensor");
  T sum = T(0);
  for (T v : vx.data) sum += v;
  const T scale = T(1) / static_cast<T>(vx.numel());
  Tensor<T> out = Tensor<T>::scalar(sum * scale);
  const bool ng = t.needs_grad(x);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [x, scale, self](Tape<T>& tp) {
      const T g = tp.grad(self).data[0] * scale;
      auto& gx = tp.grad(x);
      for (auto& v : gx.data) v += g;
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "mean_all");
}

template <typename T>
int conv1d(Tape<T>& t, int x, int kernel, int stride) {
  const auto& vx = t.val(x);
  const auto& vk = t.val(kernel);
  check_2d(vx, "conv1d");
  if (vk.rank() != 3) throw Error("conv1d: kernel must be [k,Cin,Cout]");
  if (vx.shape[0] < 1) throw Error("conv1d: empty input");
  const int k = vk.shape[0], cin = vk.shape[1], cout = vk.shape[2];
  if (k % 2 == 0) throw Error("conv1d: kernel size must be odd");
  if (stride < 1) throw Error("conv1d: stride must be >= 1");
  if (vx.shape[1] != cin) {
    throw Error("conv1d: input channels " + vx.shape_str() + " do not match kernel " + vk.shape_str());
  }
  const int tin = vx.shape[0];
  const int pad = (k - 1) / 2;
  const int tout = (tin + stride - 1) / stride;

  Tensor<T> out(std::vector<int>{tout, cout});
  for (int to = 0; to < tout; ++to) {
    T* orow = out.row_ptr(to);
    for (int dt = 0; dt < k; ++dt) {
      const int ti = to * stride + dt - pad;
      if (ti < 0 || ti >= tin) continue;
      const T* xrow = vx.row_ptr(ti);
      for (int ci = 0; ci < cin; ++ci) {
        if (xrow[ci] != T(0)) {
          simd::axpy(xrow[ci], vk.row_ptr(dt * cin + ci), orow, static_cast<size_t>(cout));
        }
      }
    }
  }
  const bool ng = t.needs_grad(x) || t.needs_grad(kernel);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [x, kernel, k, cin, cout, tin, tout, stride, pad, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      const auto& vx2 = tp.val(x);
      const auto& vk2 = tp.val(kernel);
      const bool gx_needed = tp.needs_grad(x);
      const bool gk_needed = tp.needs_grad(kernel);
      for (int to = 0; to < tout; ++to) {
        const T* grow = g.row_ptr(to);
        for (int dt = 0; dt < k; ++dt) {
          const int ti = to * stride + dt - pad;
          if (ti < 0 || ti >= tin) continue;
          if (gx_needed) {
            T* gxrow = tp.grad(x).row_ptr(ti);
            for (int ci = 0; ci < cin; ++ci) {
              gxrow[ci] += simd::dot(grow, vk2.row_ptr(dt * cin + ci),
                                     static_cast<size_t>(cout));
            }
          }
          if (gk_needed) {
            auto& gk = tp.grad(kernel);
            const T* xrow = vx2.row_ptr(ti);
            for (int ci = 0; ci < cin; ++ci) {
              if (xrow[ci] != T(0)) {
                simd::axpy(xrow[ci], grow, gk.row_ptr(dt * cin + ci),
                           static_cast<size_t>(cout));
              }
            }
          }
        }
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "conv1d");
}

template <typename T>
int tconv1d(Tape<T>& t, int x, int kernel, int stride) {
  const auto& vx = t.val(x);
  const auto& vk = t.val(kernel);
  check_2d(vx, "tconv1d");
  if (vk.rank() != 3) throw Error("tconv1d: kernel must be [k,Cout,Cin]");
  if (vx.shape[0] < 1) throw Error("tconv1d: empty input");
  if (stride < 1) throw Error("tconv1d: stride must be >= 1");
  const int k = vk.shape[0], cout = vk.shape[1], cin = vk.shape[2];
  if (vx.shape[1] != cin) {
    throw Error("tconv1d: input channels " + vx.shape_str() + " do not match kernel " + vk.shape_str());
  }
  const int tin = vx.shape[0];
  const int tout = (tin - 1) * stride + k;

  Tensor<T> out(std::vector<int>{tout, cout});
  for (int ti = 0; ti < tin; ++ti) {
    const T* xrow = vx.row_ptr(ti);
    for (int dt = 0; dt < k; ++dt) {
      T* orow = out.row_ptr(ti * stride + dt);
      for (int o = 0; o < cout; ++o) {
        orow[o] += simd::dot(vk.row_ptr(dt * cout + o), xrow, static_cast<size_t>(cin));
      }
    }
  }
  const bool ng = t.needs_grad(x) || t.needs_grad(kernel);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [x, kernel, k, cin, cout, tin, stride, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      const auto& vx2 = tp.val(x);
      const auto& vk2 = tp.val(kernel);
      const bool gx_needed = tp.needs_grad(x);
      const bool gk_needed = tp.needs_grad(kernel);
      for (int ti = 0; ti < tin; ++ti) {
        const T* xrow = vx2.row_ptr(ti);
        for (int dt = 0; dt < k; ++dt) {
          const T* grow = g.row_ptr(ti * stride + dt);
          if (gx_needed) {
            T* gxrow = tp.grad(x).row_ptr(ti);
            for (int o = 0; o < cout; ++o) {
              if (grow[o] != T(0)) {
                simd::axpy(grow[o], vk2.row_ptr(dt * cout + o), gxrow,
                           static_cast<size_t>(cin));
              }
            }
          }
          if (gk_needed) {
            auto& gk = tp.grad(kernel);
            for (int o = 0; o < cout; ++o) {
              if (grow[o] != T(0)) {
                simd::axpy(grow[o], xrow, gk.row_ptr(dt * cout + o),
                           static_cast<size_t>(cin));
              }
            }
          }
        }
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "tconv1d");
}

template <typename T>
int embedding(Tape<T>& t, const std::vector<int>& ids, int table) {
  const auto& vt = t.val(table);
  check_2d(vt, "embedding");
  if (ids.empty()) throw Error("embedding: empty id list");
  const int v = vt.shape[0], e = vt.shape[1];
  for (int id : ids) {
    if (id < 0 || id >= v) throw Error("embedding: id out of range");
  }
  Tensor<T> out(std::vector<int>{static_cast<int>(ids.size()), e});
  for (size_t i = 0; i < ids.size(); ++i) {
    std::copy(vt.row_ptr(ids[i]), vt.row_ptr(ids[i]) + e, out.row_ptr(static_cast<int>(i)));
  }
  const bool ng = t.needs_grad(table);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [table, ids, e, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      auto& gt = tp.grad(table);
      for (size_t i = 0; i < ids.size(); ++i) {
        simd::axpy(T(1), g.row_ptr(static_cast<int>(i)), gt.row_ptr(ids[i]),
                   static_cast<size_t>(e));
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "embedding");
}

template <typename T>
int softmax_rows_masked(Tape<T>& t, int logits, const Tensor<T>& mask) {
  const auto& vl = t.val(logits);
  check_2d(vl, "softmax");
  if (!vl.same_shape(mask)) {
    throw Error("softmax: mask shape " + mask.shape_str() + " does not match logits " + vl.shape_str());
  }
  const int rows = vl.shape[0], cols = vl.shape[1];
  Tensor<T> out(vl.shape);
  for (int i = 0; i < rows; ++i) {
    const T* lrow = vl.row_ptr(i);
    const T* mrow = mask.row_ptr(i);
    T best = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (int j = 0; j < cols; ++j) {
      if (mrow[j] > T(kMaskNegInf) / 2) {
        any = true;
        best = std::max(best, lrow[j] + mrow[j]);
      }
    }
    if (!any) throw Error("attention: a row has every position masked");
    T* orow = out.row_ptr(i);
    T sum = T(0);
    for (int j = 0; j < cols; ++j) {
      const T z = lrow[j] + mrow[j] - best;
      const T e = (mrow[j] > T(kMaskNegInf) / 2) ? std::exp(z) : T(0);
      orow[j] = e;
      sum += e;
    }
    const T inv = T(1) / sum;
    for (int j = 0; j < cols; ++j) orow[j] *= inv;
  }
  const bool ng = t.needs_grad(logits);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [logits, rows, cols, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      const auto& y = tp.val(self);
      auto& gl = tp.grad(logits);
      for (int i = 0; i < rows; ++i) {
        const T* grow = g.row_ptr(i);
        const T* yrow = y.row_ptr(i);
        const T dotv = simd::dot(grow, yrow, static_cast<size_t>(cols));
        T* glrow = gl.row_ptr(i);
        for (int j = 0; j < cols; ++j) {
          glrow[j] += yrow[j] * (grow[j] - dotv);
        }
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "softmax");
}

template <typename T>
Tensor<T> lower_triangular_mask(int n) {
  Tensor<T> m(std::vector<int>{n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      m.at(i, j) = j <= i ? T(0) : T(kMaskNegInf);
    }
  }
  return m;
}

template <typename T>
Tensor<T> zero_mask(int rows, int cols) {
  return Tensor<T>(std::vector<int>{rows, cols});
}

template <typename T>
int attention(Tape<T>& t, int q, int k, int v, const Tensor<T>& mask) {
  const auto& vq = t.val(q);
  const auto& vk = t.val(k);
  const auto& vv = t.val(v);
  check_2d(vq, "attention");
  check_2d(vk, "attention");
  check_2d(vv, "attention");
  if (vq.shape[1] != vk.shape[1]) throw Error("attention: Q/K width mismatch");
  if (vk.shape[0] != vv.shape[0]) throw Error("attention: K/V length mismatch");
  if (mask.rank() != 2 || mask.shape[0] != vq.shape[0] || mask.shape[1] != vk.shape[0]) {
    throw Error("attention: mask must be [n_q, n_k]");
  }
  const T scale = T(1) / std::sqrt(static_cast<T>(vq.shape[1]));
  const int logits = scale_add(t, matmul_nt(t, q, k), scale, T(0));
  const int weights = softmax_rows_masked(t, logits, mask);
  return matmul_nn(t, weights, v);
}

template <typename T>
int bce(Tape<T>& t, int p, const Tensor<T>& y) {
  const auto& vp = t.val(p);
  if (!vp.same_shape(y)) {
    throw Error("bce: prediction shape " + vp.shape_str() + " does not match labels " + y.shape_str());
  }
  if (vp.numel() == 0) throw Error("bce: empty input");
  const T lo = T(1e-7), hi = T(1) - T(1e-7);
  const size_t n = vp.data.size();
  T sum = T(0);
  for (size_t i = 0; i < n; ++i) {
    const T ph = std::clamp(vp.data[i], lo, hi);
    sum += y.data[i] > T(0.5) ? -std::log(ph) : -std::log(T(1) - ph);
  }
  Tensor<T> out = Tensor<T>::scalar(sum / static_cast<T>(n));
  const bool ng = t.needs_grad(p);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    Tensor<T> labels = y;
    bp = [p, labels, lo, hi, n, self](Tape<T>& tp) {
      const T g = tp.grad(self).data[0] / static_cast<T>(n);
      const auto& vp2 = tp.val(p);
      auto& gp = tp.grad(p);
      for (size_t i = 0; i < n; ++i) {
        const T raw = vp2.data[i];
        if (raw <= lo || raw >= hi) continue;  // clamped: zero slope
        gp.data[i] += g * (raw - labels.data[i]) / (raw * (T(1) - raw));
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "bce");
}

template <typename T>
int batchnorm(Tape<T>& t, int x, int gamma, int beta, BatchNormState<T>& state,
              bool train) {
  const auto& vx = t.val(x);
  const auto& vg = t.val(gamma);
  const auto& vb = t.val(beta);
  check_2d(vx, "batchnorm");
  const int rows = vx.shape[0], c = vx.shape[1];
  if (vg.rank() != 1 || vg.shape[0] != c || vb.rank() != 1 || vb.shape[0] != c) {
    throw Error("batchnorm: scale/shift must be rank-1 of " + std::to_string(c));
  }
  if (state.running_mean.shape != std::vector<int>{c}) {
    throw Error("batchnorm: state channel mismatch");
  }
  if (train && rows < 2) {
    throw Error("batchnorm: train mode needs at least 2 rows per channel");
  }
  const T eps = T(kBnEps);

  Tensor<T> mean(std::vector<int>{c});
  Tensor<T> inv_std(std::vector<int>{c});
  if (train) {
    for (int i = 0; i < rows; ++i) {
      simd::axpy(T(1), vx.row_ptr(i), mean.data.data(), static_cast<size_t>(c));
    }
    simd::scale(T(1) / static_cast<T>(rows), mean.data.data(), static_cast<size_t>(c));
    Tensor<T> var(std::vector<int>{c});
    for (int i = 0; i < rows; ++i) {
      const T* xr = vx.row_ptr(i);
      for (int j = 0; j < c; ++j) {
        const T d = xr[j] - mean.data[j];
        var.data[j] += d * d;
      }
    }
    simd::scale(T(1) / static_cast<T>(rows), var.data.data(), static_cast<size_t>(c));
    for (int j = 0; j < c; ++j) {
      inv_std.data[j] = T(1) / std::sqrt(var.data[j] + eps);
      state.running_mean.data[j] = T(kBnMomentum) * state.running_mean.data[j] +
                                   (T(1) - T(kBnMomentum)) * mean.data[j];
      state.running_var.data[j] = T(kBnMomentum) * state.running_var.data[j] +
                                  (T(1) - T(kBnMomentum)) * var.data[j];
    }
  } else {
    for (int j = 0; j < c; ++j) {
      mean.data[j] = state.running_mean.data[j];
      inv_std.data[j] = T(1) / std::sqrt(state.running_var.data[j] + eps);
    }
  }

  Tensor<T> xhat(vx.shape);
  Tensor<T> out(vx.shape);
  for (int i = 0; i < rows; ++i) {
    const T* xr = vx.row_ptr(i);
    T* hr = xhat.row_ptr(i);
    T* orow = out.row_ptr(i);
    for (int j = 0; j < c; ++j) {
      hr[j] = (xr[j] - mean.data[j]) * inv_std.data[j];
      orow[j] = vg.data[j] * hr[j] + vb.data[j];
    }
  }

  const bool ng = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
  const int self = static_cast<int>(t.size());
  Fn<T> bp;
  if (ng) {
    bp = [x, gamma, beta, xhat, inv_std, rows, c, train, self](Tape<T>& tp) {
      const auto& g = tp.grad(self);
      const auto& vg2 = tp.val(gamma);

      // Per-channel sums of dy and dy*xhat feed both the parameter
      // gradients and (in train mode) the batch-statistics terms of dx.
      Tensor<T> sum_dy(std::vector<int>{c});
      Tensor<T> sum_dyx(std::vector<int>{c});
      for (int i = 0; i < rows; ++i) {
        const T* grow = g.row_ptr(i);
        const T* hrow = xhat.row_ptr(i);
        for (int j = 0; j < c; ++j) {
          sum_dy.data[j] += grow[j];
          sum_dyx.data[j] += grow[j] * hrow[j];
        }
      }
      if (tp.needs_grad(gamma)) {
        simd::axpy(T(1), sum_dyx.data.data(), tp.grad(gamma).data.data(),
                   static_cast<size_t>(c));
      }
      if (tp.needs_grad(beta)) {
        simd::axpy(T(1), sum_dy.data.data(), tp.grad(beta).data.data(),
                   static_cast<size_t>(c));
      }
      if (tp.needs_grad(x)) {
        auto& gx = tp.grad(x);
        const T invn = T(1) / static_cast<T>(rows);
        for (int i = 0; i < rows; ++i) {
          const T* grow = g.row_ptr(i);
          const T* hrow = xhat.row_ptr(i);
          T* gxrow = gx.row_ptr(i);
          for (int j = 0; j < c; ++j) {
            const T scale = vg2.data[j] * inv_std.data[j];
            if (train) {
              gxrow[j] += scale * (grow[j] - sum_dy.data[j] * invn -
                                   hrow[j] * sum_dyx.data[j] * invn);
            } else {
              gxrow[j] += scale * grow[j];
            }
          }
        }
      }
    };
  }
  return t.push(std::move(out), ng, std::move(bp), "batchnorm");
}

template <typename T>
std::pair<int, int> gru(Tape<T>& t, int x, int h0, const GruWeights<T>& w) {
  const auto& vx = t.val(x);
  const auto& vwx = t.val(w.wx);
  const auto& vuzr = t.val(w.uzr);
  const auto& vuh = t.val(w.uh);
  const auto& vb = t.val(w.b);
  check_2d(vx, "gru");
  const int steps = vx.shape[0];
  const int hdim = vuh.shape[0];
  if (vuh.rank() != 2 || vuh.shape[1] != hdim) throw Error("gru: Uh must be square");
  if (vuzr.rank() != 2 || vuzr.shape[0] != 2 * hdim || vuzr.shape[1] != hdim) {
    throw Error("gru: Uzr must be [2H,H]");
  }
  if (vwx.rank() != 2 || vwx.shape[0] != 3 * hdim || vwx.shape[1] != vx.shape[1]) {
    throw Error("gru: Wx must be [3H, input_dim]");
  }
  if (vb.rank() != 1 || vb.shape[0] != 3 * hdim) throw Error("gru: bias must be [3H]");
  const auto& vh0 = t.val(h0);
  if (vh0.rank() != 2 || vh0.shape[0] != 1 || vh0.shape[1] != hdim) {
    throw Error("gru: h0 must be [1,H]");
  }

  int h = h0;
  std::vector<int> outputs;
  outputs.reserve(static_cast<size_t>(steps));
  for (int step = 0; step < steps; ++step) {
    const int xt = slice_rows(t, x, step, step + 1);            // [1,X]
    const int gx = add_rowvec(t, matmul_nt(t, xt, w.wx), w.b);  // [1,3H]
    const int hzr = matmul_nt(t, h, w.uzr);                     // [1,2H]
    const int zr = sigmoid(t, add(t, slice_cols(t, gx, 0, 2 * hdim), hzr));
    const int z = slice_cols(t, zr, 0, hdim);
    const int r = slice_cols(t, zr, hdim, 2 * hdim);
    const int rh = mul(t, r, h);
    const int hc = tanh_op(t, add(t, slice_cols(t, gx, 2 * hdim, 3 * hdim),
                                  matmul_nt(t, rh, w.uh)));
    const int keep = mul(t, scale_add(t, z, T(-1), T(1)), h);  // (1-z)*h
    h = add(t, keep, mul(t, z, hc));
    outputs.push_back(h);
  }
  const int all = concat_rows(t, outputs);
  return {all, h};
}

#define KWS_INSTANTIATE_OPS(T)                                                   \
  template int constant<T>(Tape<T>&, Tensor<T>);                                 \
  template int add<T>(Tape<T>&, int, int);                                       \
  template int mul<T>(Tape<T>&, int, int);                                       \
  template int scale_add<T>(Tape<T>&, int, T, T);                                \
  template int add_rowvec<T>(Tape<T>&, int, int);                                \
  template int relu<T>(Tape<T>&, int);                                           \
  template int sigmoid<T>(Tape<T>&, int);                                        \
  template int tanh_op<T>(Tape<T>&, int);                                        \
  template int matmul_nt<T>(Tape<T>&, int, int);                                 \
  template int matmul_nn<T>(Tape<T>&, int, int);                                 \
  template int fc<T>(Tape<T>&, int, int, int);                                   \
  template int slice_rows<T>(Tape<T>&, int, int, int);                           \
  template int slice_cols<T>(Tape<T>&, int, int, int);                           \
  template int concat_rows<T>(Tape<T>&, const std::vector<int>&);                \
  template int pad_rows<T>(Tape<T>&, int, int);                                  \
  template int mean_all<T>(Tape<T>&, int);                                       \
  template int conv1d<T>(Tape<T>&, int, int, int);                               \
  template int tconv1d<T>(Tape<T>&, int, int, int);                              \
  template int embedding<T>(Tape<T>&, const std::vector<int>&, int);             \
  template int softmax_rows_masked<T>(Tape<T>&, int, const Tensor<T>&);          \
  template Tensor<T> lower_triangular_mask<T>(int);                              \
  template Tensor<T> zero_mask<T>(int, int);                                     \
  template int attention<T>(Tape<T>&, int, int, int, const Tensor<T>&);          \
  template int bce<T>(Tape<T>&, int, const Tensor<T>&);                          \
  template int batchnorm<T>(Tape<T>&, int, int, int, BatchNormState<T>&, bool);  \
  template std::pair<int, int> gru<T>(Tape<T>&, int, int, const GruWeights<T>&);

KWS_INSTANTIATE_OPS(float)
KWS_INSTANTIATE_OPS(double)

#undef KWS_INSTANTIATE_OPS

}  // namespace kws::nn
