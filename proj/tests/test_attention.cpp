#include <doctest.h>

#include <cstring>
#include <vector>

#include "support.hpp"
#include "tac/attention.hpp"
#include "tac/param.hpp"

using tac::Tensor;
using testsupport::fd_grad;
using testsupport::max_rel_err;
using testsupport::random_tensor;

namespace {

struct AttnFixture {
  tac::ParamStore store;
  tac::AttentionParams params;

  AttnFixture(std::size_t d, tac::Rng& rng) {
    params.wq = &store.add("wq", random_tensor({d, d}, rng, 0.5));
    params.wk = &store.add("wk", random_tensor({d, d}, rng, 0.5));
    params.wv = &store.add("wv", random_tensor({d, d}, rng, 0.5));
    params.wo = &store.add("wo", random_tensor({d, d}, rng, 0.5));
  }
};

}  // namespace

TEST_CASE("single-key attention reduces to Wo(Wv kv)") {
  tac::Rng rng(21);
  const std::size_t d = 6;
  AttnFixture fx(d, rng);
  Tensor q_in = random_tensor({1, d}, rng);
  Tensor kv_in = random_tensor({1, d}, rng);
  Tensor out = tac::multi_head_attention(q_in, kv_in, fx.params, 2);
  // One key per head: softmax weight is exactly 1 for every head.
  Tensor expect = tac::linear(tac::linear(kv_in, fx.params.wv->value),
                              fx.params.wo->value);
  CHECK(testsupport::max_abs_diff(out, expect) < 1e-12);
}

TEST_CASE("head count must divide the model dim") {
  tac::Rng rng(22);
  AttnFixture fx(6, rng);
  Tensor x = random_tensor({2, 6}, rng);
  CHECK_THROWS_AS((void)tac::multi_head_attention(x, x, fx.params, 4),
                  tac::ConfigError);
}

TEST_CASE("self-attention is permutation equivariant") {
  tac::Rng rng(23);
  const std::size_t n = 5, d = 8;
  AttnFixture fx(d, rng);
  Tensor x = random_tensor({n, d}, rng);
  Tensor out = tac::multi_head_attention(x, x, fx.params, 2);

  const std::size_t perm[5] = {3, 0, 4, 1, 2};
  Tensor xp({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) xp.at2(i, j) = x.at2(perm[i], j);
  Tensor outp = tac::multi_head_attention(xp, xp, fx.params, 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      CHECK(outp.at2(i, j) == doctest::Approx(out.at2(perm[i], j)).epsilon(1e-12));
}

TEST_CASE("attention gradients match finite differences (N=3, D=8, H=2)") {
  tac::Rng rng(24);
  const std::size_t n = 3, d = 8;
  AttnFixture fx(d, rng);
  Tensor q_in = random_tensor({n, d}, rng);
  Tensor kv_in = random_tensor({n, d}, rng);
  Tensor ct = random_tensor({n, d}, rng);

  auto loss = [&]() {
    return tac::dot_flat(tac::multi_head_attention(q_in, kv_in, fx.params, 2),
                         ct);
  };

  tac::AttentionCache cache;
  (void)tac::multi_head_attention(q_in, kv_in, fx.params, 2, &cache);
  fx.store.zero_grad();
  auto [dq, dkv] = tac::multi_head_attention_backward(ct, cache, fx.params, 2);

  CHECK(max_rel_err(dq, fd_grad(loss, q_in)) < 1e-5);
  CHECK(max_rel_err(dkv, fd_grad(loss, kv_in)) < 1e-5);
  for (const char* name : {"wq", "wk", "wv", "wo"}) {
    tac::Param& p = fx.store.at(name);
    CHECK(max_rel_err(p.grad, fd_grad(loss, p.value)) < 1e-5);
  }
}

TEST_CASE("self-attention input gradient sums query and key/value paths") {
  tac::Rng rng(25);
  const std::size_t n = 4, d = 4;
  AttnFixture fx(d, rng);
  Tensor x = random_tensor({n, d}, rng);
  Tensor ct = random_tensor({n, d}, rng);

  auto loss = [&]() {
    return tac::dot_flat(tac::multi_head_attention(x, x, fx.params, 1), ct);
  };
  tac::AttentionCache cache;
  (void)tac::multi_head_attention(x, x, fx.params, 1, &cache);
  fx.store.zero_grad();
  auto [dq, dkv] = tac::multi_head_attention_backward(ct, cache, fx.params, 1);
  Tensor dx = dq;
  tac::add_inplace(dx, dkv);
  CHECK(max_rel_err(dx, fd_grad(loss, x)) < 1e-5);
}
