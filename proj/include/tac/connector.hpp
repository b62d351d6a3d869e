#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tac/config.hpp"
#include "tac/errors.hpp"
#include "tac/lfe.hpp"
#include "tac/param.hpp"
#include "tac/rng.hpp"
#include "tac/tensor.hpp"
#include "tac/tfm.hpp"

// Full temporal alignment connector: one shared LFE applied to the current
// and prior layer stacks, then the TFM. A missing prior is replaced by a copy
// of the current stack (the dummy prior), which pins the prefix scale to 1.

namespace tac {

struct TacParams {
  ParamStore store;
  LfeParams lfe;
  TfmParams tfm;

  TacParams() = default;
  TacParams(TacParams&&) = default;
  TacParams& operator=(TacParams&&) = default;
};

namespace detail {

struct GlorotSpec {
  Param* param;
  std::size_t fan_in, fan_out;
};

struct TacStructure {
  TacParams params;
  std::vector<GlorotSpec> glorot;  // creation order
};

// Creates every named parameter (zero-filled) and wires the module views.
// Naming and creation order are the stable contract used by checkpoints.
inline TacStructure build_tac(const TacConfig& cfg) {
  cfg.validate();
  TacStructure s;
  ParamStore& store = s.params.store;
  const std::size_t d_enc = cfg.encoder_dim;
  const std::size_t d_llm = cfg.llm_dim;

  auto weight = [&](std::string name, std::size_t fan_in, std::size_t fan_out,
                    std::vector<std::size_t> shape) -> Param* {
    Param& p = store.add(std::move(name), Tensor(std::move(shape)));
    s.glorot.push_back({&p, fan_in, fan_out});
    return &p;
  };
  auto constant = [&](std::string name, std::vector<std::size_t> shape,
                      real fill) -> Param* {
    return &store.add(std::move(name), Tensor(std::move(shape), fill));
  };

  const auto chain = channel_chain(cfg.encoder_layers);
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    const std::size_t cin = chain[i], cout = chain[i + 1];
    const std::size_t r = effective_se_reduction(cin, cfg.se_reduction);
    const std::size_t mid = cin / r;
    const std::string base = "lfe.stage" + std::to_string(i) + ".";
    LfeStageParams stage;
    stage.in_channels = cin;
    stage.out_channels = cout;
    stage.se.reduction = r;
    stage.se.w1 = weight(base + "se.w1", cin, mid, {cin, mid});
    stage.se.w2 = weight(base + "se.w2", mid, cin, {mid, cin});
    stage.mix = weight(base + "mix", cin, cout, {cout, cin});
    s.params.lfe.stages.push_back(stage);
  }

  TfmParams& tfm = s.params.tfm;
  tfm.prefix.llm_dim = d_llm;
  tfm.prefix.b_prior = constant("tfm.prefix.b_prior", {d_enc}, 0);

  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    const std::string base = "tfm.block" + std::to_string(b) + ".";
    TfmBlockParams blk;
    blk.heads = cfg.heads;
    auto attn = [&](const std::string& kind) {
      AttentionParams a;
      a.wq = weight(base + kind + ".wq", d_enc, d_enc, {d_enc, d_enc});
      a.wk = weight(base + kind + ".wk", d_enc, d_enc, {d_enc, d_enc});
      a.wv = weight(base + kind + ".wv", d_enc, d_enc, {d_enc, d_enc});
      a.wo = weight(base + kind + ".wo", d_enc, d_enc, {d_enc, d_enc});
      return a;
    };
    blk.self_attn = attn("self");
    blk.cross_attn = attn("cross");
    blk.ln_self_gamma = constant(base + "ln_self.gamma", {d_enc}, 1);
    blk.ln_self_beta = constant(base + "ln_self.beta", {d_enc}, 0);
    blk.ln_cross_gamma = constant(base + "ln_cross.gamma", {d_enc}, 1);
    blk.ln_cross_beta = constant(base + "ln_cross.beta", {d_enc}, 0);
    blk.ln_out_gamma = constant(base + "ln_out.gamma", {d_enc}, 1);
    blk.ln_out_beta = constant(base + "ln_out.beta", {d_enc}, 0);
    const std::size_t hidden = 4 * d_enc;
    blk.mlp.w0 = weight(base + "mlp.w0", d_enc, hidden, {d_enc, hidden});
    blk.mlp.b0 = constant(base + "mlp.b0", {hidden}, 0);
    blk.mlp.w1 = weight(base + "mlp.w1", hidden, d_enc, {hidden, d_enc});
    blk.mlp.b1 = constant(base + "mlp.b1", {d_enc}, 0);
    tfm.blocks.push_back(blk);
  }

  const std::size_t widths[5] = {d_enc, d_llm, d_llm, d_llm, d_llm};
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string base = "tfm.final.";
    tfm.final_mlp.w[i] = weight(base + "w" + std::to_string(i), widths[i],
                                widths[i + 1], {widths[i], widths[i + 1]});
    tfm.final_mlp.b[i] =
        constant(base + "b" + std::to_string(i), {widths[i + 1]}, 0);
  }
  return s;
}

}  // namespace detail

// Deterministic Glorot-uniform initialization from the config seed; biases,
// b_prior and LN betas start at zero, LN gammas at one.
inline TacParams tac_init(const TacConfig& cfg) {
  detail::TacStructure s = detail::build_tac(cfg);
  Rng rng(cfg.seed);
  for (const detail::GlorotSpec& g : s.glorot) {
    const real limit =
        std::sqrt(real(6) / real(g.fan_in + g.fan_out));
    for (real& v : g.param->value.data)
      v = static_cast<real>(rng.uniform(-limit, limit));
  }
  return std::move(s.params);
}

struct TacCache {
  LfeCache lfe_curr, lfe_prior;
  Tensor fused_curr, fused_prior;  // LFE outputs (N, D)
  TfmCache tfm;
  bool dummy_prior = false;
};

inline void validate_stack(const Tensor& stack, const TacConfig& cfg,
                           const char* which) {
  if (stack.rank() != 3) {
    throw DimensionError(std::string(which) + " stack: expected rank 3, got " +
                         stack.shape_str());
  }
  const std::size_t want[3] = {cfg.encoder_layers, cfg.tokens(),
                               cfg.encoder_dim};
  const char* axis_name[3] = {"layers", "tokens", "dim"};
  for (std::size_t a = 0; a < 3; ++a) {
    if (stack.shape[a] != want[a]) {
      throw DimensionError(std::string(which) + " stack axis " +
                           std::to_string(a) + " (" + axis_name[a] + "): got " +
                           std::to_string(stack.shape[a]) + ", expected " +
                           std::to_string(want[a]));
    }
  }
}

// prior == nullptr selects the dummy-prior path (prior := curr).
inline Tensor tac_forward(const Tensor& curr, const Tensor* prior,
                          TacParams& params, const TacConfig& cfg,
                          TacCache* cache = nullptr) {
  validate_stack(curr, cfg, "current");
  const bool dummy = (prior == nullptr);
  if (!dummy) validate_stack(*prior, cfg, "prior");

  TacCache local;
  TacCache& c = cache ? *cache : local;
  c.dummy_prior = dummy;

  c.fused_curr = lfe_forward(curr, params.lfe, cache ? &c.lfe_curr : nullptr);
  if (dummy) {
    c.fused_prior = c.fused_curr;  // shared LFE on an identical stack
    const PrefixScaleResult ps =
        prefix_scale(c.fused_curr, c.fused_prior, params.tfm.prefix.llm_dim);
    if (ps.scale != real(1) && !ps.degenerate) {
      throw std::logic_error("dummy prior did not pin prefix scale to 1");
    }
  } else {
    c.fused_prior =
        lfe_forward(*prior, params.lfe, cache ? &c.lfe_prior : nullptr);
  }

  return tfm_forward(c.fused_curr, c.fused_prior, params.tfm,
                     cache ? &c.tfm : nullptr);
}

// Returns (d_curr_stack, d_prior_stack); for the dummy path the combined
// gradient lands on d_curr_stack and d_prior_stack is empty.
inline std::pair<Tensor, Tensor> tac_backward(const Tensor& dz,
                                              const TacCache& cache,
                                              TacParams& params) {
  auto [d_fused_curr, d_fused_prior] = tfm_backward(dz, cache.tfm, params.tfm);
  if (cache.dummy_prior) {
    add_inplace(d_fused_curr, d_fused_prior);
    Tensor d_curr = lfe_backward(d_fused_curr, cache.lfe_curr, params.lfe);
    return {std::move(d_curr), Tensor()};
  }
  Tensor d_curr = lfe_backward(d_fused_curr, cache.lfe_curr, params.lfe);
  Tensor d_prior = lfe_backward(d_fused_prior, cache.lfe_prior, params.lfe);
  return {std::move(d_curr), std::move(d_prior)};
}

}  // namespace tac
