#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "tac/config.hpp"
#include "tac/connector.hpp"
#include "tac/errors.hpp"
#include "tac/ops.hpp"
#include "tac/param.hpp"
#include "tac/rng.hpp"
#include "tac/synth.hpp"
#include "tac/tensor.hpp"

// Toy stage-1 harness: the connector is trained against a 3-way direction
// probe (linear head on the mean-pooled connector output) with an adaptive
// first/second-moment optimizer. Deterministic given the seeds.

namespace tac {

struct ToyTrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 50;
  real learning_rate = real(1e-3);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real adam_eps = real(1e-8);
  std::uint64_t seed = 123;
};

inline ToyTrainConfig train_config_from(const KeyValueFile& kv) {
  ToyTrainConfig t;
  t.epochs = kv.get_u64("epochs", t.epochs);
  t.batch_size = kv.get_u64("batch_size", t.batch_size);
  t.learning_rate = static_cast<real>(
      kv.get_f64("learning_rate", double(t.learning_rate)));
  t.beta1 = static_cast<real>(kv.get_f64("beta1", double(t.beta1)));
  t.beta2 = static_cast<real>(kv.get_f64("beta2", double(t.beta2)));
  t.adam_eps = static_cast<real>(kv.get_f64("adam_eps", double(t.adam_eps)));
  t.seed = kv.get_u64("train_seed", t.seed);
  return t;
}

// Linear head mapping mean-pooled connector output (dim d) to 3 logits.
struct ProbeParams {
  ParamStore store;
  Param* w = nullptr;  // [d, 3]
  Param* b = nullptr;  // [3]

  ProbeParams() = default;
  ProbeParams(ProbeParams&&) = default;
  ProbeParams& operator=(ProbeParams&&) = default;
};

inline ProbeParams probe_init(std::size_t llm_dim, std::uint64_t seed) {
  ProbeParams probe;
  probe.w = &probe.store.add("probe.w", Tensor({llm_dim, 3}));
  probe.b = &probe.store.add("probe.b", Tensor({3}));
  Rng rng(seed);
  const real limit = std::sqrt(real(6) / real(llm_dim + 3));
  for (real& v : probe.w->value.data)
    v = static_cast<real>(rng.uniform(-limit, limit));
  return probe;
}

// Adaptive moment optimizer: bias-corrected first/second-moment estimates.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Param*> params, real lr, real beta1, real beta2,
                real eps)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
        eps_(eps) {
    for (Param* p : params_) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }

  void step() {
    ++t_;
    const real bc1 = real(1) - std::pow(beta1_, real(t_));
    const real bc2 = real(1) - std::pow(beta2_, real(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Param& p = *params_[i];
      for (std::size_t k = 0; k < p.value.numel(); ++k) {
        const real g = p.grad.data[k];
        real& m = m_[i].data[k];
        real& v = v_[i].data[k];
        m = beta1_ * m + (real(1) - beta1_) * g;
        v = beta2_ * v + (real(1) - beta2_) * g * g;
        const real mhat = m / bc1;
        const real vhat = v / bc2;
        p.value.data[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  std::vector<Param*> params_;
  std::vector<Tensor> m_, v_;
  real lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

namespace detail {

inline Tensor mean_pool_rows(const Tensor& z) {
  const std::size_t rows = z.shape[0], dim = z.shape[1];
  Tensor pooled({dim});
  for (std::size_t r = 0; r < rows; ++r) {
    const real* row = z.data.data() + r * dim;
    for (std::size_t j = 0; j < dim; ++j) pooled.data[j] += row[j];
  }
  const real inv = real(1) / real(rows);
  for (real& v : pooled.data) v *= inv;
  return pooled;
}

struct ProbeEval {
  Tensor probs;  // [3]
  real loss = 0;
  int predicted = 0;
};

inline ProbeEval probe_eval(const Tensor& pooled, const ProbeParams& probe,
                            int label) {
  Tensor logits = linear(pooled, probe.w->value, &probe.b->value);
  ProbeEval ev;
  ev.probs = softmax_rows(logits);
  ev.predicted = static_cast<int>(
      std::max_element(ev.probs.data.begin(), ev.probs.data.end()) -
      ev.probs.data.begin());
  if (label >= 0) {
    ev.loss = -std::log(std::max(ev.probs.data[label], real(1e-300)));
  }
  return ev;
}

}  // namespace detail

// Forward-only class prediction for one pair.
inline int predict_direction(const Tensor& curr, const Tensor& prior,
                             TacParams& params, const ProbeParams& probe,
                             const TacConfig& cfg) {
  Tensor z = tac_forward(curr, &prior, params, cfg);
  Tensor pooled = detail::mean_pool_rows(z);
  return detail::probe_eval(pooled, probe, -1).predicted;
}

struct TrainResult {
  std::vector<real> loss_curve;  // per-epoch mean cross-entropy
  real train_accuracy = 0;       // last epoch, pre-update predictions
};

// Minimizes probe cross-entropy over direction labels; updates both the
// connector and the probe. Deterministic batch order from cfg.seed.
inline TrainResult train_toy(const std::vector<LabeledPair>& pairs,
                             TacParams& params, ProbeParams& probe,
                             const TacConfig& cfg,
                             const ToyTrainConfig& train_cfg) {
  if (pairs.empty()) throw ConfigError("train_toy: empty training set");

  std::vector<Param*> all = params.store.params();
  for (Param* p : probe.store.params()) all.push_back(p);
  AdamOptimizer opt(all, train_cfg.learning_rate, train_cfg.beta1,
                    train_cfg.beta2, train_cfg.adam_eps);
  Rng shuffle_rng(train_cfg.seed);

  TrainResult result;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t(0));

  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    // Fisher-Yates with our deterministic rng.
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.below(i));
      std::swap(order[i - 1], order[j]);
    }

    real epoch_loss = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size();
         start += train_cfg.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + train_cfg.batch_size);
      const real inv_batch = real(1) / real(end - start);
      params.store.zero_grad();
      probe.store.zero_grad();

      for (std::size_t bi = start; bi < end; ++bi) {
        const LabeledPair& sample = pairs[order[bi]];
        const int label = static_cast<int>(sample.label);

        TacCache cache;
        Tensor z = tac_forward(sample.curr, &sample.prior, params, cfg, &cache);
        Tensor pooled = detail::mean_pool_rows(z);
        detail::ProbeEval ev = detail::probe_eval(pooled, probe, label);
        if (!std::isfinite(ev.loss)) {
          throw TrainingError("non-finite loss at epoch " +
                              std::to_string(epoch) + ", sample " +
                              std::to_string(order[bi]));
        }
        epoch_loss += ev.loss;
        if (ev.predicted == label) ++correct;

        // d(mean CE)/d(logits) = (p - onehot) / batch
        Tensor dlogits = ev.probs;
        dlogits.data[label] -= real(1);
        for (real& v : dlogits.data) v *= inv_batch;
        Tensor dpooled = linear_backward(dlogits, pooled, probe.w->value,
                                         probe.w->grad, &probe.b->grad);
        const std::size_t rows = z.shape[0];
        Tensor dz(z.shape);
        const real inv_rows = real(1) / real(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          real* drow = dz.data.data() + r * z.shape[1];
          for (std::size_t j = 0; j < z.shape[1]; ++j)
            drow[j] = dpooled.data[j] * inv_rows;
        }
        tac_backward(dz, cache, params);
      }
      opt.step();
    }
    result.loss_curve.push_back(epoch_loss / real(pairs.size()));
    result.train_accuracy = real(correct) / real(pairs.size());
  }
  return result;
}

struct SwapReport {
  real accuracy = 0;        // direction accuracy on (curr, prior)
  real flip_rate = 0;       // opposite prediction after swapping, non-stable pairs
  real chance_flip_rate = 0;  // independence-level flip rate from marginals
  // Accuracy on (prior, curr) scored against direction-flipped labels.
  real swapped_flipped_accuracy = 0;
  std::size_t n = 0;
  std::size_t n_non_stable = 0;
};

inline Direction opposite_direction(Direction d) {
  switch (d) {
    case Direction::Worsened: return Direction::Improved;
    case Direction::Improved: return Direction::Worsened;
    case Direction::Stable: return Direction::Stable;
  }
  return Direction::Stable;
}

// Swap evaluation: accuracy on the original order, and the rate at which
// swapping current/prior flips the predicted direction to its opposite
// (worsened <-> improved). chance_flip_rate is what an input-order-blind
// predictor with the same marginals would flip by coincidence.
inline SwapReport eval_swap(const std::vector<LabeledPair>& test,
                            TacParams& params, const ProbeParams& probe,
                            const TacConfig& cfg) {
  SwapReport report;
  report.n = test.size();
  std::size_t correct = 0, flips = 0, swapped_correct = 0;
  std::size_t orig_w = 0, orig_i = 0, swap_w = 0, swap_i = 0;
  for (const LabeledPair& sample : test) {
    const int pred = predict_direction(sample.curr, sample.prior, params,
                                       probe, cfg);
    if (pred == static_cast<int>(sample.label)) ++correct;
    const int swapped = predict_direction(sample.prior, sample.curr, params,
                                          probe, cfg);
    if (swapped == static_cast<int>(opposite_direction(sample.label)))
      ++swapped_correct;
    if (sample.label == Direction::Stable) continue;
    ++report.n_non_stable;
    const bool flip =
        (pred == static_cast<int>(Direction::Worsened) &&
         swapped == static_cast<int>(Direction::Improved)) ||
        (pred == static_cast<int>(Direction::Improved) &&
         swapped == static_cast<int>(Direction::Worsened));
    if (flip) ++flips;
    orig_w += pred == static_cast<int>(Direction::Worsened);
    orig_i += pred == static_cast<int>(Direction::Improved);
    swap_w += swapped == static_cast<int>(Direction::Worsened);
    swap_i += swapped == static_cast<int>(Direction::Improved);
  }
  report.accuracy = test.empty() ? real(0) : real(correct) / real(test.size());
  report.swapped_flipped_accuracy =
      test.empty() ? real(0) : real(swapped_correct) / real(test.size());
  if (report.n_non_stable > 0) {
    const real inv = real(1) / real(report.n_non_stable);
    report.flip_rate = real(flips) * inv;
    report.chance_flip_rate = (real(orig_w) * inv) * (real(swap_i) * inv) +
                              (real(orig_i) * inv) * (real(swap_w) * inv);
  }
  return report;
}

}  // namespace tac
