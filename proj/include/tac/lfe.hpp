#pragma once

#include <string>
#include <vector>

#include "tac/config.hpp"
#include "tac/errors.hpp"
#include "tac/ops.hpp"
#include "tac/param.hpp"
#include "tac/tensor.hpp"

// Layerwise feature extractor: collapses an (L, N, D) stack of per-layer
// patch-token embeddings to one fused (N, D) plane through a chain of
// squeeze-and-excitation gates and cross-channel 1x1 convolutions
// (channel counts follow the divisor chain of L, e.g. 12 -> 6 -> 3 -> 1).

namespace tac {

struct SeParams {
  Param* w1 = nullptr;  // [C, C/r] squeeze projection
  Param* w2 = nullptr;  // [C/r, C] excitation projection
  std::size_t reduction = 1;
};

struct LfeStageParams {
  SeParams se;
  Param* mix = nullptr;  // [Cout, Cin] cross-channel kernel
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
};

struct LfeParams {
  std::vector<LfeStageParams> stages;
};

struct SeCache {
  Tensor x;           // stage input [C,N,D]
  Tensor pooled;      // per-channel squeeze means [C]
  Tensor hidden_pre;  // pooled . w1, pre-GELU [C/r]
  Tensor hidden;      // GELU(hidden_pre)
  Tensor excite_pre;  // hidden . w2, pre-sigmoid [C]
  Tensor gates;       // sigmoid(excite_pre), each in (0,1)
};

struct LfeStageCache {
  SeCache se;
  Tensor gated;  // SE output, input to the mixing conv
};

struct LfeCache {
  std::vector<LfeStageCache> stages;
};

// Per-channel gate: global average over (N,D) -> bottleneck MLP -> sigmoid.
inline Tensor se_forward(const Tensor& x, const SeParams& p,
                         SeCache* cache = nullptr) {
  if (x.rank() != 3) {
    throw DimensionError("se_forward: expected rank-3 input, got " +
                         x.shape_str());
  }
  const std::size_t c = x.shape[0], plane = x.shape[1] * x.shape[2];
  if (p.w1->value.shape[0] != c) {
    throw DimensionError("se_forward: input channels " + x.shape_str() +
                         " do not match w1 " + p.w1->value.shape_str());
  }
  Tensor pooled({c});
  const real inv_plane = real(1) / real(plane);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const real* row = x.data.data() + ch * plane;
    real s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += row[i];
    pooled.data[ch] = s * inv_plane;
  }
  Tensor hidden_pre = linear(pooled, p.w1->value);
  Tensor hidden = gelu(hidden_pre);
  Tensor excite_pre = linear(hidden, p.w2->value);
  Tensor gates({c});
  for (std::size_t ch = 0; ch < c; ++ch)
    gates.data[ch] = sigmoid_scalar(excite_pre.data[ch]);

  Tensor y(x.shape);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const real g = gates.data[ch];
    const real* src = x.data.data() + ch * plane;
    real* dst = y.data.data() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = g * src[i];
  }
  if (cache) {
    cache->x = x;
    cache->pooled = std::move(pooled);
    cache->hidden_pre = std::move(hidden_pre);
    cache->hidden = std::move(hidden);
    cache->excite_pre = std::move(excite_pre);
    cache->gates = std::move(gates);
  }
  return y;
}

inline Tensor se_backward(const Tensor& dy, const SeCache& c,
                          const SeParams& p) {
  const std::size_t ch_count = c.x.shape[0];
  const std::size_t plane = c.x.shape[1] * c.x.shape[2];
  Tensor dx(c.x.shape);
  Tensor dgate({ch_count});
  for (std::size_t ch = 0; ch < ch_count; ++ch) {
    const real g = c.gates.data[ch];
    const real* xr = c.x.data.data() + ch * plane;
    const real* dyr = dy.data.data() + ch * plane;
    real* dxr = dx.data.data() + ch * plane;
    real acc = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      acc += dyr[i] * xr[i];
      dxr[i] = g * dyr[i];
    }
    dgate.data[ch] = acc;
  }
  // Through the sigmoid and bottleneck.
  Tensor dexcite({ch_count});
  for (std::size_t ch = 0; ch < ch_count; ++ch) {
    const real g = c.gates.data[ch];
    dexcite.data[ch] = dgate.data[ch] * g * (real(1) - g);
  }
  Tensor dhidden = linear_backward(dexcite, c.hidden, p.w2->value, p.w2->grad);
  Tensor dhidden_pre = gelu_backward(dhidden, c.hidden_pre);
  Tensor dpooled = linear_backward(dhidden_pre, c.pooled, p.w1->value,
                                   p.w1->grad);
  // Squeeze mean spreads its gradient uniformly over the plane.
  const real inv_plane = real(1) / real(plane);
  for (std::size_t ch = 0; ch < ch_count; ++ch) {
    const real spread = dpooled.data[ch] * inv_plane;
    real* dxr = dx.data.data() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) dxr[i] += spread;
  }
  return dx;
}

inline Tensor lfe_stage_forward(const Tensor& x, const LfeStageParams& p,
                                LfeStageCache* cache = nullptr) {
  if (x.shape[0] != p.in_channels) {
    throw ConfigError("lfe_stage: input has " + std::to_string(x.shape[0]) +
                      " channels, stage expects " +
                      std::to_string(p.in_channels));
  }
  LfeStageCache local;
  LfeStageCache* c = cache ? cache : &local;
  c->gated = se_forward(x, p.se, &c->se);
  return conv1x1_channels(c->gated, p.mix->value);
}

inline Tensor lfe_stage_backward(const Tensor& dy, const LfeStageCache& c,
                                 const LfeStageParams& p) {
  Tensor dgated = conv1x1_channels_backward(dy, c.gated, p.mix->value,
                                            p.mix->grad);
  return se_backward(dgated, c.se, p.se);
}

inline Tensor lfe_forward(const Tensor& stack, const LfeParams& p,
                          LfeCache* cache = nullptr) {
  if (stack.rank() != 3) {
    throw DimensionError("lfe_forward: expected (L,N,D) stack, got " +
                         stack.shape_str());
  }
  if (p.stages.empty()) {
    // Single-layer encoder: the chain is already at 1, nothing to compress.
    if (stack.shape[0] != 1) {
      throw ConfigError("lfe_forward: no stages but stack has " +
                        std::to_string(stack.shape[0]) + " layers");
    }
    Tensor out = stack;
    out.shape = {stack.shape[1], stack.shape[2]};
    return out;
  }
  if (p.stages.back().out_channels != 1) {
    throw ConfigError("lfe_forward: stage chain does not end at 1 channel");
  }
  if (cache) cache->stages.resize(p.stages.size());
  Tensor h = stack;
  for (std::size_t i = 0; i < p.stages.size(); ++i) {
    h = lfe_stage_forward(h, p.stages[i], cache ? &cache->stages[i] : nullptr);
  }
  // (1, N, D) -> (N, D)
  h.shape = {h.shape[1], h.shape[2]};
  return h;
}

// Returns the gradient w.r.t. the input stack.
inline Tensor lfe_backward(const Tensor& dy, const LfeCache& cache,
                           const LfeParams& p) {
  Tensor g = dy;
  g.shape = {1, dy.shape[0], dy.shape[1]};
  for (std::size_t i = p.stages.size(); i-- > 0;) {
    g = lfe_stage_backward(g, cache.stages[i], p.stages[i]);
  }
  return g;
}

}  // namespace tac
