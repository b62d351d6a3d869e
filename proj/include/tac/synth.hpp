#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tac/config.hpp"
#include "tac/errors.hpp"
#include "tac/rng.hpp"
#include "tac/tensor.hpp"

// Synthetic temporal pairs: each sample is a (current, prior) pair of layer
// stacks sharing a Gaussian base, where the current image additionally
// carries a signed structured change on a contiguous token block (a synthetic
// lesion region). The sign encodes the direction label.

namespace tac {

enum class Direction : int { Worsened = 0, Stable = 1, Improved = 2 };

inline const char* direction_name(Direction d) {
  switch (d) {
    case Direction::Worsened: return "worsened";
    case Direction::Stable: return "stable";
    case Direction::Improved: return "improved";
  }
  return "?";
}

inline int direction_sign(Direction d) {
  switch (d) {
    case Direction::Worsened: return +1;
    case Direction::Stable: return 0;
    case Direction::Improved: return -1;
  }
  return 0;
}

struct SyntheticPairSpec {
  TacConfig config;  // toy dims
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  real delta_scale = real(1.0);
  real noise_scale = real(0.1);
  std::uint64_t seed = 1;

  void validate() const {
    config.validate();
    if (n_train == 0 && n_test == 0) {
      throw ConfigError("pair spec: no samples requested");
    }
    if (!(delta_scale > noise_scale && noise_scale > 0)) {
      throw ConfigError(
          "pair spec: requires delta_scale > noise_scale > 0, got delta=" +
          std::to_string(double(delta_scale)) +
          " noise=" + std::to_string(double(noise_scale)));
    }
  }
};

struct LabeledPair {
  Tensor curr, prior;  // (L, N, D) stacks
  Direction label = Direction::Stable;
};

struct PairSet {
  std::vector<LabeledPair> train, test;
  Tensor pattern;           // (N, D) direction pattern, zero off-block
  std::size_t block_start = 0;
  std::size_t block_len = 0;
};

namespace detail {

// Layer stacks share a base plane plus a smaller per-layer perturbation.
constexpr real kLayerJitter = real(0.25);

inline PairSet generate_pairs(const SyntheticPairSpec& spec) {
  const TacConfig& cfg = spec.config;
  const std::size_t L = cfg.encoder_layers, N = cfg.tokens(),
                    D = cfg.encoder_dim;
  Rng rng(spec.seed);

  PairSet set;
  set.block_len = std::max<std::size_t>(1, N / 4);
  set.block_start = static_cast<std::size_t>(rng.below(N - set.block_len + 1));
  set.pattern = Tensor({N, D});
  for (std::size_t n = set.block_start; n < set.block_start + set.block_len;
       ++n) {
    for (std::size_t j = 0; j < D; ++j)
      set.pattern.at2(n, j) = static_cast<real>(rng.gaussian());
  }

  const std::size_t total = spec.n_train + spec.n_test;
  std::vector<LabeledPair> all;
  all.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const Direction label = static_cast<Direction>(i % 3);
    const real s = static_cast<real>(direction_sign(label));

    Tensor shared({N, D});
    for (real& v : shared.data) v = static_cast<real>(rng.gaussian());

    Tensor base({L, N, D});
    for (std::size_t l = 0; l < L; ++l) {
      real* plane = base.data.data() + l * N * D;
      for (std::size_t k = 0; k < N * D; ++k) {
        plane[k] = shared.data[k] +
                   kLayerJitter * static_cast<real>(rng.gaussian());
      }
    }

    LabeledPair pair;
    pair.label = label;
    pair.prior = base;
    for (real& v : pair.prior.data)
      v += spec.noise_scale * static_cast<real>(rng.gaussian());
    pair.curr = std::move(base);
    for (std::size_t l = 0; l < L; ++l) {
      real* plane = pair.curr.data.data() + l * N * D;
      for (std::size_t k = 0; k < N * D; ++k)
        plane[k] += s * spec.delta_scale * set.pattern.data[k];
    }
    for (real& v : pair.curr.data)
      v += spec.noise_scale * static_cast<real>(rng.gaussian());
    all.push_back(std::move(pair));
  }

  set.train.assign(std::make_move_iterator(all.begin()),
                   std::make_move_iterator(all.begin() + spec.n_train));
  set.test.assign(std::make_move_iterator(all.begin() + spec.n_train),
                  std::make_move_iterator(all.end()));
  return set;
}

}  // namespace detail

// Labels cycle worsened/stable/improved, so counts per class differ by at
// most one within each split when the split sizes are multiples of 3.
inline PairSet gen_pairs(const SyntheticPairSpec& spec) {
  spec.validate();
  return detail::generate_pairs(spec);
}

inline SyntheticPairSpec pair_spec_from(const KeyValueFile& kv,
                                        const TacConfig& cfg) {
  SyntheticPairSpec spec;
  spec.config = cfg;
  spec.n_train = kv.get_u64("n_train", 0);
  spec.n_test = kv.get_u64("n_test", 0);
  spec.delta_scale = static_cast<real>(kv.get_f64("delta_scale", 1.0));
  spec.noise_scale = static_cast<real>(kv.get_f64("noise_scale", 0.1));
  spec.seed = kv.get_u64("data_seed", 1);
  return spec;
}

}  // namespace tac
