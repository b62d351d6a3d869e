#pragma once

#include <cmath>
#include <utility>

#include "tac/errors.hpp"
#include "tac/ops.hpp"
#include "tac/param.hpp"
#include "tac/tensor.hpp"

namespace tac {

// Projection set for one attention operator; all [D,D], bias-free.
struct AttentionParams {
  Param* wq = nullptr;
  Param* wk = nullptr;
  Param* wv = nullptr;
  Param* wo = nullptr;
};

struct AttentionCache {
  Tensor q_in, kv_in;
  Tensor q, k, v;    // projected, [Nq,D] / [Nk,D]
  Tensor attn;       // [H, Nq, Nk] softmax weights
  Tensor ctx;        // concatenated head outputs, [Nq,D]
};

namespace detail {

// Copy head h (columns h*dh .. h*dh+dh) into a contiguous [rows, dh] buffer.
inline Tensor gather_head(const Tensor& t, std::size_t h, std::size_t dh) {
  const std::size_t rows = t.shape[0], d = t.shape[1];
  Tensor out({rows, dh});
  for (std::size_t r = 0; r < rows; ++r) {
    const real* src = t.data.data() + r * d + h * dh;
    real* dst = out.data.data() + r * dh;
    for (std::size_t j = 0; j < dh; ++j) dst[j] = src[j];
  }
  return out;
}

inline void scatter_head_add(Tensor& t, const Tensor& piece, std::size_t h,
                             std::size_t dh) {
  const std::size_t rows = t.shape[0], d = t.shape[1];
  for (std::size_t r = 0; r < rows; ++r) {
    real* dst = t.data.data() + r * d + h * dh;
    const real* src = piece.data.data() + r * dh;
    for (std::size_t j = 0; j < dh; ++j) dst[j] += src[j];
  }
}

}  // namespace detail

// Scaled dot-product multi-head attention; self-attention is q_in == kv_in.
// Scale is 1/sqrt(D/H) per head.
inline Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in,
                                   const AttentionParams& p, std::size_t heads,
                                   AttentionCache* cache = nullptr) {
  if (q_in.rank() != 2 || kv_in.rank() != 2 ||
      q_in.shape[1] != kv_in.shape[1]) {
    throw DimensionError("attention: q " + q_in.shape_str() + " vs kv " +
                         kv_in.shape_str());
  }
  const std::size_t d = q_in.shape[1];
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention: model dim " + std::to_string(d) +
                      " not divisible by head count " + std::to_string(heads));
  }
  const std::size_t nq = q_in.shape[0], nk = kv_in.shape[0];
  const std::size_t dh = d / heads;
  const real scale = real(1) / std::sqrt(real(dh));

  Tensor q = linear(q_in, p.wq->value);
  Tensor k = linear(kv_in, p.wk->value);
  Tensor v = linear(kv_in, p.wv->value);
  Tensor attn({heads, nq, nk});
  Tensor ctx({nq, d});

  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = detail::gather_head(q, h, dh);
    Tensor kh = detail::gather_head(k, h, dh);
    Tensor vh = detail::gather_head(v, h, dh);
    Tensor scores({nq, nk});
    detail::gemm_nt(qh.data.data(), kh.data.data(), scores.data.data(), nq, dh,
                    nk, false);
    for (real& s : scores.data) s *= scale;
    Tensor w = softmax_rows(scores);
    Tensor ctx_h({nq, dh});
    detail::gemm_nn(w.data.data(), vh.data.data(), ctx_h.data.data(), nq, nk,
                    dh, false);
    detail::scatter_head_add(ctx, ctx_h, h, dh);
    std::copy(w.data.begin(), w.data.end(), attn.data.begin() + h * nq * nk);
  }

  Tensor out = linear(ctx, p.wo->value);
  if (cache) {
    cache->q_in = q_in;
    cache->kv_in = kv_in;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attn = std::move(attn);
    cache->ctx = std::move(ctx);
  }
  return out;
}

// Returns (d_q_in, d_kv_in); weight grads accumulate into the params. For the
// self-attention case the caller adds the two returned gradients.
inline std::pair<Tensor, Tensor> multi_head_attention_backward(
    const Tensor& dout, const AttentionCache& c, const AttentionParams& p,
    std::size_t heads) {
  const std::size_t d = c.q_in.shape[1];
  const std::size_t nq = c.q_in.shape[0], nk = c.kv_in.shape[0];
  const std::size_t dh = d / heads;
  const real scale = real(1) / std::sqrt(real(dh));

  Tensor dctx = linear_backward(dout, c.ctx, p.wo->value, p.wo->grad);

  Tensor dq({nq, d}), dk({nk, d}), dv({nk, d});
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor dctx_h = detail::gather_head(dctx, h, dh);
    Tensor vh = detail::gather_head(c.v, h, dh);
    Tensor qh = detail::gather_head(c.q, h, dh);
    Tensor kh = detail::gather_head(c.k, h, dh);
    Tensor w({nq, nk});
    std::copy(c.attn.data.begin() + h * nq * nk,
              c.attn.data.begin() + (h + 1) * nq * nk, w.data.begin());

    Tensor dw({nq, nk});
    detail::gemm_nt(dctx_h.data.data(), vh.data.data(), dw.data.data(), nq, dh,
                    nk, false);
    Tensor dvh({nk, dh});
    detail::gemm_tn(w.data.data(), dctx_h.data.data(), dvh.data.data(), nk, nq,
                    dh, false);

    Tensor dscores = softmax_rows_backward(dw, w);
    for (real& s : dscores.data) s *= scale;

    Tensor dqh({nq, dh});
    detail::gemm_nn(dscores.data.data(), kh.data.data(), dqh.data.data(), nq,
                    nk, dh, false);
    Tensor dkh({nk, dh});
    detail::gemm_tn(dscores.data.data(), qh.data.data(), dkh.data.data(), nk,
                    nq, dh, false);

    detail::scatter_head_add(dq, dqh, h, dh);
    detail::scatter_head_add(dk, dkh, h, dh);
    detail::scatter_head_add(dv, dvh, h, dh);
  }

  Tensor dq_in = linear_backward(dq, c.q_in, p.wq->value, p.wq->grad);
  Tensor dkv_in = linear_backward(dk, c.kv_in, p.wk->value, p.wk->grad);
  Tensor dkv_v = linear_backward(dv, c.kv_in, p.wv->value, p.wv->grad);
  add_inplace(dkv_in, dkv_v);
  return {std::move(dq_in), std::move(dkv_in)};
}

}  // namespace tac
