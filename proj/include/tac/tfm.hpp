#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <utility>
#include <vector>

#include "tac/attention.hpp"
#include "tac/errors.hpp"
#include "tac/ops.hpp"
#include "tac/param.hpp"
#include "tac/tensor.hpp"

// Temporal fusion module: weighs current-image features against prior-image
// features. The prior stream gets a trainable bias scaled by a nonlinear
// function of the feature cosine, then a stack of decoder-style blocks fuses
// the two streams (shared-weight self-attention on each, cross-attention with
// current as query), and a four-layer MLP projects into the LLM width.

namespace tac {

struct PrefixBias {
  Param* b_prior = nullptr;  // [D], broadcast over tokens
  std::size_t llm_dim = 0;
};

struct BlockMlpParams {
  Param* w0 = nullptr;  // [D, 4D]
  Param* b0 = nullptr;
  Param* w1 = nullptr;  // [4D, D]
  Param* b1 = nullptr;
};

struct TfmBlockParams {
  AttentionParams self_attn;   // shared between the two streams
  AttentionParams cross_attn;  // current queries, prior keys/values
  // Three LN pairs: the self-attention one is shared by both streams.
  Param* ln_self_gamma = nullptr;
  Param* ln_self_beta = nullptr;
  Param* ln_cross_gamma = nullptr;
  Param* ln_cross_beta = nullptr;
  Param* ln_out_gamma = nullptr;
  Param* ln_out_beta = nullptr;
  BlockMlpParams mlp;
  std::size_t heads = 1;
};

struct FinalMlpParams {
  std::array<Param*, 4> w{};  // D->d, d->d, d->d, d->d
  std::array<Param*, 4> b{};
};

struct TfmParams {
  PrefixBias prefix;
  std::vector<TfmBlockParams> blocks;
  FinalMlpParams final_mlp;
  real ln_eps = real(1e-5);
};

// ---------------------------------------------------------------------------
// Prefix scale: ((cos(curr, prior) + 1) / 2) ^ (llm_dim ^ 1/4), cosine taken
// between the two feature matrices flattened to vectors.

struct PrefixScaleResult {
  real cosine = 0;
  real scale = 0;
  real exponent = 0;     // llm_dim^(1/4)
  real norm_curr = 0;    // |curr|
  real norm_prior = 0;   // |prior|
  real dot = 0;
  bool identical = false;   // bitwise-equal inputs: cosine pinned to 1
  bool degenerate = false;  // a zero tensor: cosine defined as 0
};

inline PrefixScaleResult prefix_scale(const Tensor& curr, const Tensor& prior,
                                      std::size_t llm_dim) {
  require_same_shape(curr, prior, "prefix_scale");
  PrefixScaleResult r;
  r.exponent = std::pow(real(llm_dim), real(0.25));
  real dot = 0, nc2 = 0, np2 = 0;
  for (std::size_t i = 0; i < curr.numel(); ++i) {
    dot += curr.data[i] * prior.data[i];
    nc2 += curr.data[i] * curr.data[i];
    np2 += prior.data[i] * prior.data[i];
  }
  r.dot = dot;
  r.norm_curr = std::sqrt(nc2);
  r.norm_prior = std::sqrt(np2);
  if (nc2 == 0 || np2 == 0) {
    // A zero feature tensor has no direction; callers may log this.
    r.degenerate = true;
    r.cosine = 0;
  } else if (curr.data == prior.data) {
    // Dummy-prior path: cosine is exactly 1, not 1 up to rounding.
    r.identical = true;
    r.cosine = 1;
  } else {
    r.cosine = std::clamp(dot / (r.norm_curr * r.norm_prior), real(-1), real(1));
  }
  const real u = (r.cosine + 1) / 2;
  r.scale = std::pow(u, r.exponent);
  return r;
}

// Adds d(scale)/d(curr), d(scale)/d(prior) times `dscale` into dcurr/dprior.
inline void prefix_scale_backward(real dscale, const PrefixScaleResult& r,
                                  const Tensor& curr, const Tensor& prior,
                                  Tensor& dcurr, Tensor& dprior) {
  if (r.degenerate || r.identical) return;  // zero gradient in both cases
  const real u = (r.cosine + 1) / 2;
  real dscale_dcos;
  if (u == 0) {
    dscale_dcos = (r.exponent == 1) ? real(0.5) : real(0);
  } else {
    dscale_dcos = r.exponent * std::pow(u, r.exponent - 1) * real(0.5);
  }
  const real factor = dscale * dscale_dcos;
  const real inv_ncnp = real(1) / (r.norm_curr * r.norm_prior);
  const real inv_nc2 = real(1) / (r.norm_curr * r.norm_curr);
  const real inv_np2 = real(1) / (r.norm_prior * r.norm_prior);
  for (std::size_t i = 0; i < curr.numel(); ++i) {
    dcurr.data[i] +=
        factor * (prior.data[i] * inv_ncnp - r.cosine * curr.data[i] * inv_nc2);
    dprior.data[i] +=
        factor * (curr.data[i] * inv_ncnp - r.cosine * prior.data[i] * inv_np2);
  }
}

// prior'[n,:] = prior[n,:] + scale * b_prior
inline Tensor apply_prefix(const Tensor& prior, const Tensor& b_prior,
                           real scale) {
  const std::size_t dim = prior.shape.back();
  if (b_prior.numel() != dim) {
    throw DimensionError("apply_prefix: bias " + b_prior.shape_str() +
                         " does not match features " + prior.shape_str());
  }
  Tensor out = prior;
  const std::size_t rows = leading_rows(prior);
  for (std::size_t n = 0; n < rows; ++n) {
    real* row = out.data.data() + n * dim;
    for (std::size_t j = 0; j < dim; ++j) row[j] += scale * b_prior.data[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Transformer block

struct TfmBlockCache {
  Tensor curr_in;
  AttentionCache self_curr, self_prior, cross;
  LayerNormCache ln_self_curr, ln_self_prior, ln_cross, ln_out;
  Tensor t_curr, t_prior, t_cross;
  Tensor mlp_pre, mlp_hidden;  // first FC output pre/post GELU
};

inline Tensor tfm_block(const Tensor& curr, const Tensor& prior_biased,
                        const TfmBlockParams& p, real eps,
                        TfmBlockCache* cache = nullptr) {
  require_same_shape(curr, prior_biased, "tfm_block");
  TfmBlockCache local;
  TfmBlockCache& c = cache ? *cache : local;
  if (cache) c.curr_in = curr;

  Tensor s_curr = multi_head_attention(curr, curr, p.self_attn, p.heads,
                                       cache ? &c.self_curr : nullptr);
  add_inplace(s_curr, curr);
  c.t_curr = layer_norm(s_curr, p.ln_self_gamma->value, p.ln_self_beta->value,
                        eps, cache ? &c.ln_self_curr : nullptr);

  Tensor s_prior = multi_head_attention(prior_biased, prior_biased, p.self_attn,
                                        p.heads, cache ? &c.self_prior : nullptr);
  add_inplace(s_prior, prior_biased);
  c.t_prior = layer_norm(s_prior, p.ln_self_gamma->value, p.ln_self_beta->value,
                         eps, cache ? &c.ln_self_prior : nullptr);

  Tensor x = multi_head_attention(c.t_curr, c.t_prior, p.cross_attn, p.heads,
                                  cache ? &c.cross : nullptr);
  add_inplace(x, c.t_curr);
  c.t_cross = layer_norm(x, p.ln_cross_gamma->value, p.ln_cross_beta->value,
                         eps, cache ? &c.ln_cross : nullptr);

  Tensor pre = linear(c.t_cross, p.mlp.w0->value, &p.mlp.b0->value);
  Tensor hidden = gelu(pre);
  Tensor m = linear(hidden, p.mlp.w1->value, &p.mlp.b1->value);
  if (cache) {
    c.mlp_pre = std::move(pre);
    c.mlp_hidden = std::move(hidden);
  }

  add_inplace(m, curr);  // residual from the block's current-stream input
  return layer_norm(m, p.ln_out_gamma->value, p.ln_out_beta->value, eps,
                    cache ? &c.ln_out : nullptr);
}

// Returns (d_curr, d_prior_biased).
inline std::pair<Tensor, Tensor> tfm_block_backward(const Tensor& dout,
                                                    const TfmBlockCache& c,
                                                    const TfmBlockParams& p) {
  // T_out = LN(curr + MLP(t_cross))
  Tensor d_sum = layer_norm_backward(dout, c.ln_out, p.ln_out_gamma->value,
                                     p.ln_out_gamma->grad, p.ln_out_beta->grad);
  Tensor dcurr = d_sum;

  Tensor dhidden = linear_backward(d_sum, c.mlp_hidden, p.mlp.w1->value,
                                   p.mlp.w1->grad, &p.mlp.b1->grad);
  Tensor dpre = gelu_backward(dhidden, c.mlp_pre);
  Tensor dt_cross = linear_backward(dpre, c.t_cross, p.mlp.w0->value,
                                    p.mlp.w0->grad, &p.mlp.b0->grad);

  // T_cross = LN(t_curr + CrossAttn(t_curr; t_prior))
  Tensor d_sum3 = layer_norm_backward(dt_cross, c.ln_cross,
                                      p.ln_cross_gamma->value,
                                      p.ln_cross_gamma->grad,
                                      p.ln_cross_beta->grad);
  Tensor dt_curr = d_sum3;
  auto [dq_cross, dkv_cross] =
      multi_head_attention_backward(d_sum3, c.cross, p.cross_attn, p.heads);
  add_inplace(dt_curr, dq_cross);
  Tensor dt_prior = std::move(dkv_cross);

  // T_prior = LN(prior' + SelfAttn(prior'; prior'))
  Tensor d_sum2 = layer_norm_backward(dt_prior, c.ln_self_prior,
                                      p.ln_self_gamma->value,
                                      p.ln_self_gamma->grad,
                                      p.ln_self_beta->grad);
  Tensor dprior = d_sum2;
  auto [dq_sp, dkv_sp] =
      multi_head_attention_backward(d_sum2, c.self_prior, p.self_attn, p.heads);
  add_inplace(dprior, dq_sp);
  add_inplace(dprior, dkv_sp);

  // T_curr = LN(curr + SelfAttn(curr; curr))
  Tensor d_sum1 = layer_norm_backward(dt_curr, c.ln_self_curr,
                                      p.ln_self_gamma->value,
                                      p.ln_self_gamma->grad,
                                      p.ln_self_beta->grad);
  add_inplace(dcurr, d_sum1);
  auto [dq_sc, dkv_sc] =
      multi_head_attention_backward(d_sum1, c.self_curr, p.self_attn, p.heads);
  add_inplace(dcurr, dq_sc);
  add_inplace(dcurr, dkv_sc);

  return {std::move(dcurr), std::move(dprior)};
}

// ---------------------------------------------------------------------------
// Full module

struct FinalMlpCache {
  Tensor x0, a0, g0, a1, g1, a2, g2;
};

struct TfmCache {
  Tensor curr_in, prior_in;
  PrefixScaleResult prefix;
  Tensor prior_biased;
  std::vector<TfmBlockCache> blocks;
  FinalMlpCache final;
};

inline Tensor tfm_forward(const Tensor& curr, const Tensor& prior,
                          const TfmParams& p, TfmCache* cache = nullptr) {
  require_same_shape(curr, prior, "tfm_forward");
  TfmCache local;
  TfmCache& c = cache ? *cache : local;
  if (cache) {
    c.curr_in = curr;
    c.prior_in = prior;
    c.blocks.resize(p.blocks.size());
  }

  c.prefix = prefix_scale(curr, prior, p.prefix.llm_dim);
  c.prior_biased = apply_prefix(prior, p.prefix.b_prior->value, c.prefix.scale);

  Tensor h = curr;
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    h = tfm_block(h, c.prior_biased, p.blocks[i], p.ln_eps,
                  cache ? &c.blocks[i] : nullptr);
  }

  FinalMlpCache& f = c.final;
  f.x0 = std::move(h);
  f.a0 = linear(f.x0, p.final_mlp.w[0]->value, &p.final_mlp.b[0]->value);
  f.g0 = gelu(f.a0);
  f.a1 = linear(f.g0, p.final_mlp.w[1]->value, &p.final_mlp.b[1]->value);
  f.g1 = gelu(f.a1);
  f.a2 = linear(f.g1, p.final_mlp.w[2]->value, &p.final_mlp.b[2]->value);
  f.g2 = gelu(f.a2);
  return linear(f.g2, p.final_mlp.w[3]->value, &p.final_mlp.b[3]->value);
}

// Returns (d_curr, d_prior) w.r.t. the fused feature inputs.
inline std::pair<Tensor, Tensor> tfm_backward(const Tensor& dz,
                                              const TfmCache& c,
                                              const TfmParams& p) {
  const FinalMlpCache& f = c.final;
  Tensor dg2 = linear_backward(dz, f.g2, p.final_mlp.w[3]->value,
                               p.final_mlp.w[3]->grad, &p.final_mlp.b[3]->grad);
  Tensor da2 = gelu_backward(dg2, f.a2);
  Tensor dg1 = linear_backward(da2, f.g1, p.final_mlp.w[2]->value,
                               p.final_mlp.w[2]->grad, &p.final_mlp.b[2]->grad);
  Tensor da1 = gelu_backward(dg1, f.a1);
  Tensor dg0 = linear_backward(da1, f.g0, p.final_mlp.w[1]->value,
                               p.final_mlp.w[1]->grad, &p.final_mlp.b[1]->grad);
  Tensor da0 = gelu_backward(dg0, f.a0);
  Tensor dh = linear_backward(da0, f.x0, p.final_mlp.w[0]->value,
                              p.final_mlp.w[0]->grad, &p.final_mlp.b[0]->grad);

  Tensor dprior_biased = zeros_like(c.prior_biased);
  for (std::size_t i = p.blocks.size(); i-- > 0;) {
    auto [dcurr_i, dprior_i] = tfm_block_backward(dh, c.blocks[i], p.blocks[i]);
    dh = std::move(dcurr_i);
    add_inplace(dprior_biased, dprior_i);
  }

  // prior' = prior + scale * b_prior
  Tensor dprior = dprior_biased;
  const std::size_t dim = c.prior_in.shape.back();
  const std::size_t rows = leading_rows(c.prior_in);
  const Tensor& b = p.prefix.b_prior->value;
  real dscale = 0;
  for (std::size_t n = 0; n < rows; ++n) {
    const real* row = dprior_biased.data.data() + n * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      p.prefix.b_prior->grad.data[j] += c.prefix.scale * row[j];
      dscale += row[j] * b.data[j];
    }
  }

  Tensor dcurr = std::move(dh);
  prefix_scale_backward(dscale, c.prefix, c.curr_in, c.prior_in, dcurr, dprior);
  return {std::move(dcurr), std::move(dprior)};
}

}  // namespace tac
