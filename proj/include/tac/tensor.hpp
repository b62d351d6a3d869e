#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tac/errors.hpp"

#if defined(TAC_USE_EIGEN)
#include <Eigen/Core>
#endif

namespace tac {

// Double precision is the verification default; define TAC_SINGLE_PRECISION
// for speed builds (checkpoints stay f64 on disk either way).
#if defined(TAC_SINGLE_PRECISION)
using real = float;
#else
using real = double;
#endif

// Dense row-major tensor. Rank is dynamic; the library uses ranks 1..3.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<real> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> extents, real fill = real(0))
      : shape(std::move(extents)),
        data(product(shape), fill) {}

  Tensor(std::initializer_list<std::size_t> extents, real fill = real(0))
      : Tensor(std::vector<std::size_t>(extents), fill) {}

  static std::size_t product(const std::vector<std::size_t>& extents) {
    std::size_t n = 1;
    for (std::size_t e : extents) n *= e;
    return n;
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t extent(std::size_t axis) const { return shape[axis]; }
  bool empty() const { return data.empty(); }

  real& operator[](std::size_t i) { return data[i]; }
  real operator[](std::size_t i) const { return data[i]; }

  real& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  real at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  real& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  real at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  void zero() { std::fill(data.begin(), data.end(), real(0)); }

  std::string shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << ", ";
      os << shape[i];
    }
    os << ')';
    return os.str();
  }
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " +
                         a.shape_str() + " vs " + b.shape_str());
  }
}

// y += x
inline void add_inplace(Tensor& y, const Tensor& x) {
  require_same_shape(y, x, "add");
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] += x.data[i];
}

// y += alpha * x
inline void axpy(Tensor& y, real alpha, const Tensor& x) {
  require_same_shape(y, x, "axpy");
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] += alpha * x.data[i];
}

inline real dot_flat(const Tensor& a, const Tensor& b) {
  real s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
  return s;
}

namespace detail {

#if defined(TAC_USE_EIGEN)

using EMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

// C (+)= A[M,K] * B[K,N]
inline void gemm_nn(const real* a, const real* b, real* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  ECMap A(a, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
  ECMap B(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  EMap C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

// C (+)= A[M,K] * B[N,K]^T
inline void gemm_nt(const real* a, const real* b, real* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  ECMap A(a, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
  ECMap B(b, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  EMap C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

// C (+)= A[K,M]^T * B[K,N]
inline void gemm_tn(const real* a, const real* b, real* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  ECMap A(a, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
  ECMap B(b, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  EMap C(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

#else  // portable blocked kernels

inline void gemm_nn(const real* a, const real* b, real* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(real));
  constexpr std::size_t kb = 128, nb = 512;
  for (std::size_t k0 = 0; k0 < k; k0 += kb) {
    const std::size_t k1 = std::min(k, k0 + kb);
    for (std::size_t j0 = 0; j0 < n; j0 += nb) {
      const std::size_t j1 = std::min(n, j0 + nb);
      for (std::size_t i = 0; i < m; ++i) {
        real* __restrict crow = c + i * n;
        for (std::size_t kk = k0; kk < k1; ++kk) {
          const real av = a[i * k + kk];
          const real* __restrict brow = b + kk * n;
          for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

inline void gemm_nt(const real* a, const real* b, real* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const real* __restrict arow = a + i * k;
    real* __restrict crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const real* __restrict brow = b + j * k;
      real s = 0;
      for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      crow[j] = accumulate ? crow[j] + s : s;
    }
  }
}

inline void gemm_tn(const real* a, const real* b, real* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(real));
  for (std::size_t kk = 0; kk < k; ++kk) {
    const real* __restrict arow = a + kk * m;
    const real* __restrict brow = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const real av = arow[i];
      real* __restrict crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

#endif

}  // namespace detail

// C = A[M,K] * B[K,N]; the 2-D building block everything else leans on.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) {
    throw DimensionError("matmul: incompatible shapes " + a.shape_str() +
                         " x " + b.shape_str());
  }
  Tensor c({a.shape[0], b.shape[1]});
  detail::gemm_nn(a.data.data(), b.data.data(), c.data.data(), a.shape[0],
                  a.shape[1], b.shape[1], false);
  return c;
}

}  // namespace tac
