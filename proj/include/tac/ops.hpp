#pragma once

#include <cmath>
#include <cstddef>

#include "tac/errors.hpp"
#include "tac/tensor.hpp"

// Forward/backward passes of every primitive. Conventions:
//   * forward never mutates its inputs;
//   * backward returns the input gradient by value and ACCUMULATES (+=) into
//     any weight-gradient tensor it is handed, so shared weights and residual
//     fan-in compose without special cases.

namespace tac {

inline std::size_t leading_rows(const Tensor& x) {
  // Collapse all leading dims; the op works on the trailing axis.
  return x.shape.empty() ? 0 : x.numel() / x.shape.back();
}

// ---------------------------------------------------------------------------
// linear: y = x . w (+ b), x [*, in], w [in, out], b [out]

inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b = nullptr) {
  if (x.rank() < 1 || w.rank() != 2 || x.shape.back() != w.shape[0]) {
    throw DimensionError("linear: x " + x.shape_str() + " incompatible with w " +
                         w.shape_str());
  }
  if (b && (b->rank() != 1 || b->shape[0] != w.shape[1])) {
    throw DimensionError("linear: bias " + b->shape_str() +
                         " does not match w " + w.shape_str());
  }
  const std::size_t rows = leading_rows(x);
  const std::size_t in = w.shape[0], out = w.shape[1];
  std::vector<std::size_t> yshape = x.shape;
  yshape.back() = out;
  Tensor y(std::move(yshape));
  detail::gemm_nn(x.data.data(), w.data.data(), y.data.data(), rows, in, out,
                  false);
  if (b) {
    for (std::size_t r = 0; r < rows; ++r) {
      real* yr = y.data.data() + r * out;
      for (std::size_t j = 0; j < out; ++j) yr[j] += b->data[j];
    }
  }
  return y;
}

// Accumulates dw (+= x^T dy) and db (+= column sums of dy); returns dx.
inline Tensor linear_backward(const Tensor& dy, const Tensor& x, const Tensor& w,
                              Tensor& dw, Tensor* db = nullptr) {
  const std::size_t rows = leading_rows(x);
  const std::size_t in = w.shape[0], out = w.shape[1];
  detail::gemm_tn(x.data.data(), dy.data.data(), dw.data.data(), in, rows, out,
                  true);
  if (db) {
    for (std::size_t r = 0; r < rows; ++r) {
      const real* dyr = dy.data.data() + r * out;
      for (std::size_t j = 0; j < out; ++j) db->data[j] += dyr[j];
    }
  }
  Tensor dx(x.shape);
  detail::gemm_nt(dy.data.data(), w.data.data(), dx.data.data(), rows, out, in,
                  false);
  return dx;
}

// ---------------------------------------------------------------------------
// GELU, exact form x * Phi(x) with Phi the standard normal CDF.

inline real gelu_scalar(real x) {
  return x * real(0.5) * (real(1) + std::erf(x * real(0.7071067811865475244)));
}

inline real gelu_grad_scalar(real x) {
  const real phi_cdf = real(0.5) * (real(1) + std::erf(x * real(0.7071067811865475244)));
  const real phi_pdf = std::exp(real(-0.5) * x * x) * real(0.3989422804014326779);
  return phi_cdf + x * phi_pdf;
}

inline Tensor gelu(const Tensor& x) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) y.data[i] = gelu_scalar(x.data[i]);
  return y;
}

inline Tensor gelu_backward(const Tensor& dy, const Tensor& x) {
  Tensor dx(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i)
    dx.data[i] = dy.data[i] * gelu_grad_scalar(x.data[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// Layer normalization over the trailing axis.

struct LayerNormCache {
  Tensor xhat;               // normalized input, same shape as x
  std::vector<real> inv_std; // one per row
};

inline Tensor layer_norm(const Tensor& x, const Tensor& gamma,
                         const Tensor& beta, real eps,
                         LayerNormCache* cache = nullptr) {
  const std::size_t dim = x.shape.back();
  if (gamma.numel() != dim || beta.numel() != dim) {
    throw DimensionError("layer_norm: gamma/beta do not match trailing dim of " +
                         x.shape_str());
  }
  const std::size_t rows = leading_rows(x);
  Tensor y(x.shape);
  if (cache) {
    cache->xhat = Tensor(x.shape);
    cache->inv_std.assign(rows, real(0));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const real* xr = x.data.data() + r * dim;
    real* yr = y.data.data() + r * dim;
    real mean = 0;
    for (std::size_t j = 0; j < dim; ++j) mean += xr[j];
    mean /= real(dim);
    real var = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      const real d = xr[j] - mean;
      var += d * d;
    }
    var /= real(dim);
    const real inv = real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < dim; ++j) {
      const real xh = (xr[j] - mean) * inv;
      yr[j] = gamma.data[j] * xh + beta.data[j];
      if (cache) cache->xhat.data[r * dim + j] = xh;
    }
    if (cache) cache->inv_std[r] = inv;
  }
  return y;
}

inline Tensor layer_norm_backward(const Tensor& dy, const LayerNormCache& cache,
                                  const Tensor& gamma, Tensor& dgamma,
                                  Tensor& dbeta) {
  const std::size_t dim = cache.xhat.shape.back();
  const std::size_t rows = leading_rows(cache.xhat);
  Tensor dx(cache.xhat.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const real* dyr = dy.data.data() + r * dim;
    const real* xh = cache.xhat.data.data() + r * dim;
    real* dxr = dx.data.data() + r * dim;
    real sum_g = 0, sum_gx = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      const real g = dyr[j] * gamma.data[j];
      sum_g += g;
      sum_gx += g * xh[j];
      dgamma.data[j] += dyr[j] * xh[j];
      dbeta.data[j] += dyr[j];
    }
    const real inv = cache.inv_std[r];
    const real inv_dim = real(1) / real(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      const real g = dyr[j] * gamma.data[j];
      dxr[j] = (g - sum_g * inv_dim - xh[j] * sum_gx * inv_dim) * inv;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Row softmax over the trailing axis, max-subtracted for stability.

inline Tensor softmax_rows(const Tensor& x) {
  const std::size_t dim = x.shape.back();
  const std::size_t rows = leading_rows(x);
  Tensor y(x.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const real* xr = x.data.data() + r * dim;
    real* yr = y.data.data() + r * dim;
    real mx = xr[0];
    for (std::size_t j = 1; j < dim; ++j) mx = std::max(mx, xr[j]);
    real sum = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const real inv = real(1) / sum;
    for (std::size_t j = 0; j < dim; ++j) yr[j] *= inv;
  }
  return y;
}

// dx = y .* (dy - rowsum(dy .* y))
inline Tensor softmax_rows_backward(const Tensor& dy, const Tensor& y) {
  const std::size_t dim = y.shape.back();
  const std::size_t rows = leading_rows(y);
  Tensor dx(y.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const real* dyr = dy.data.data() + r * dim;
    const real* yr = y.data.data() + r * dim;
    real* dxr = dx.data.data() + r * dim;
    real dot = 0;
    for (std::size_t j = 0; j < dim; ++j) dot += dyr[j] * yr[j];
    for (std::size_t j = 0; j < dim; ++j) dxr[j] = yr[j] * (dyr[j] - dot);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Pointwise cross-channel convolution: out[c,n,d] = sum_i kernel[c,i]*x[i,n,d].
// A 1x1, stride-1, bias-free conv with the layer index as the channel axis.

inline Tensor conv1x1_channels(const Tensor& x, const Tensor& kernel) {
  if (x.rank() != 3 || kernel.rank() != 2 || kernel.shape[1] != x.shape[0]) {
    throw DimensionError("conv1x1_channels: kernel " + kernel.shape_str() +
                         " incompatible with x " + x.shape_str());
  }
  const std::size_t cin = x.shape[0], plane = x.shape[1] * x.shape[2];
  const std::size_t cout = kernel.shape[0];
  Tensor y({cout, x.shape[1], x.shape[2]});
  detail::gemm_nn(kernel.data.data(), x.data.data(), y.data.data(), cout, cin,
                  plane, false);
  return y;
}

// Accumulates dkernel (+= dy . x^T over the plane); returns dx.
inline Tensor conv1x1_channels_backward(const Tensor& dy, const Tensor& x,
                                        const Tensor& kernel, Tensor& dkernel) {
  const std::size_t cin = x.shape[0], plane = x.shape[1] * x.shape[2];
  const std::size_t cout = kernel.shape[0];
  detail::gemm_nt(dy.data.data(), x.data.data(), dkernel.data.data(), cout,
                  plane, cin, true);
  Tensor dx(x.shape);
  detail::gemm_tn(kernel.data.data(), dy.data.data(), dx.data.data(), cin, cout,
                  plane, false);
  return dx;
}

// ---------------------------------------------------------------------------
// Small elementwise helpers used by SE gating.

inline real sigmoid_scalar(real x) { return real(1) / (real(1) + std::exp(-x)); }

inline bool all_finite(const Tensor& t) {
  for (real v : t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace tac
