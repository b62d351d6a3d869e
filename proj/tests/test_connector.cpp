#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "support.hpp"
#include "tac/checkpoint.hpp"
#include "tac/config.hpp"
#include "tac/connector.hpp"
#include "tac/gradcheck.hpp"

using tac::TacConfig;
using tac::Tensor;
using testsupport::random_tensor;

namespace {

TacConfig toy_config(std::uint64_t seed = 7) {
  TacConfig cfg;
  cfg.encoder_layers = 12;
  cfg.grid = 3;
  cfg.encoder_dim = 8;
  cfg.llm_dim = 16;
  cfg.heads = 2;
  cfg.blocks = 1;
  cfg.seed = seed;
  return cfg;
}

// Closed-form parameter count from the shape formulas.
std::size_t expected_param_count(const TacConfig& cfg) {
  std::size_t total = 0;
  const auto chain = tac::channel_chain(cfg.encoder_layers);
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    const std::size_t cin = chain[i], cout = chain[i + 1];
    const std::size_t r = tac::effective_se_reduction(cin, cfg.se_reduction);
    total += cin * (cin / r) * 2;  // SE bottleneck
    total += cout * cin;           // mixing kernel
  }
  const std::size_t d = cfg.encoder_dim, llm = cfg.llm_dim;
  total += d;  // b_prior
  // per block: two attention ops, three LN pairs, the 2-layer MLP with biases
  total += cfg.blocks * (8 * d * d + 6 * d + (d * 4 * d + 4 * d) +
                         (4 * d * d + d));
  // final MLP: D->d then three d->d layers, all with biases
  total += d * llm + llm + 3 * (llm * llm + llm);
  return total;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tac_init is deterministic in the seed") {
  const TacConfig cfg = toy_config(42);
  tac::TacParams a = tac::tac_init(cfg);
  tac::TacParams b = tac::tac_init(cfg);
  auto pa = a.store.params(), pb = b.store.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(std::memcmp(pa[i]->value.data.data(), pb[i]->value.data.data(),
                      pa[i]->value.numel() * sizeof(tac::real)) == 0);
  }

  TacConfig other = cfg;
  other.seed = 43;
  tac::TacParams c = tac::tac_init(other);
  bool any_diff = false;
  auto pc = c.store.params();
  for (std::size_t i = 0; i < pa.size() && !any_diff; ++i) {
    any_diff = std::memcmp(pa[i]->value.data.data(), pc[i]->value.data.data(),
                           pa[i]->value.numel() * sizeof(tac::real)) != 0;
  }
  CHECK(any_diff);
}

TEST_CASE("parameter count matches the closed form") {
  {
    const TacConfig cfg = toy_config();
    tac::TacParams params = tac::tac_init(cfg);
    CHECK(params.store.total_values() == expected_param_count(cfg));
  }
  {
    TacConfig cfg;  // paper-scale defaults; init only, no forward
    tac::TacParams params = tac::tac_init(cfg);
    CHECK(params.store.total_values() == expected_param_count(cfg));
  }
}

TEST_CASE("b_prior starts at zero and LN affine at identity") {
  tac::TacParams params = tac::tac_init(toy_config());
  for (tac::real v : params.tfm.prefix.b_prior->value.data) CHECK(v == 0.0);
  for (tac::real v : params.store.at("tfm.block0.ln_self.gamma").value.data)
    CHECK(v == 1.0);
  for (tac::real v : params.store.at("tfm.block0.ln_self.beta").value.data)
    CHECK(v == 0.0);
}

TEST_CASE("dummy prior equals explicit self-pair bitwise") {
  const TacConfig cfg = toy_config();
  tac::TacParams params = tac::tac_init(cfg);
  tac::Rng rng(5);
  Tensor stack = random_tensor({cfg.encoder_layers, cfg.tokens(),
                                cfg.encoder_dim}, rng);
  Tensor z_dummy = tac::tac_forward(stack, nullptr, params, cfg);
  Tensor z_self = tac::tac_forward(stack, &stack, params, cfg);
  CHECK(z_dummy.shape == z_self.shape);
  CHECK(std::memcmp(z_dummy.data.data(), z_self.data.data(),
                    z_dummy.numel() * sizeof(tac::real)) == 0);
}

TEST_CASE("shared LFE gives the same features in either slot") {
  const TacConfig cfg = toy_config();
  tac::TacParams params = tac::tac_init(cfg);
  tac::Rng rng(6);
  Tensor x = random_tensor({cfg.encoder_layers, cfg.tokens(), cfg.encoder_dim},
                           rng);
  Tensor y = random_tensor(x.shape, rng);

  tac::TacCache as_curr, as_prior;
  (void)tac::tac_forward(x, &y, params, cfg, &as_curr);
  (void)tac::tac_forward(y, &x, params, cfg, &as_prior);
  CHECK(std::memcmp(as_curr.fused_curr.data.data(),
                    as_prior.fused_prior.data.data(),
                    as_curr.fused_curr.numel() * sizeof(tac::real)) == 0);
}

TEST_CASE("stack validation names the offending axis") {
  const TacConfig cfg = toy_config();
  tac::TacParams params = tac::tac_init(cfg);
  Tensor bad({cfg.encoder_layers, cfg.tokens(), cfg.encoder_dim + 1});
  try {
    (void)tac::tac_forward(bad, nullptr, params, cfg);
    FAIL("expected DimensionError");
  } catch (const tac::DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("dim") != std::string::npos);
    CHECK(msg.find("9") != std::string::npos);
    CHECK(msg.find("8") != std::string::npos);
  }
}

TEST_CASE("config validation rejects bad divisibility") {
  TacConfig cfg = toy_config();
  cfg.heads = 3;  // does not divide 8
  CHECK_THROWS_AS(cfg.validate(), tac::ConfigError);
  CHECK_THROWS_AS((void)tac::tac_init(cfg), tac::ConfigError);
}

TEST_CASE("checkpoint round-trip restores every tensor bitwise") {
  const TacConfig cfg = toy_config(9);
  tac::TacParams params = tac::tac_init(cfg);
  const std::string path = temp_path("tac_roundtrip.tac");
  tac::save_checkpoint(params, cfg, path);
  tac::LoadedCheckpoint loaded = tac::load_checkpoint(path);
  CHECK(loaded.config == cfg);
  auto orig = params.store.params();
  auto back = loaded.params.store.params();
  REQUIRE(orig.size() == back.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i]->name == back[i]->name);
    CHECK(std::memcmp(orig[i]->value.data.data(), back[i]->value.data.data(),
                      orig[i]->value.numel() * sizeof(tac::real)) == 0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("truncated checkpoint fails to load") {
  const TacConfig cfg = toy_config(10);
  tac::TacParams params = tac::tac_init(cfg);
  const std::string path = temp_path("tac_trunc.tac");
  tac::save_checkpoint(params, cfg, path);
  const auto full = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full - 16);
  CHECK_THROWS_AS((void)tac::load_checkpoint(path), tac::CheckpointError);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt magic fails to load") {
  const std::string path = temp_path("tac_magic.tac");
  std::ofstream(path, std::ios::binary) << "NOPE garbage";
  CHECK_THROWS_AS((void)tac::load_checkpoint(path), tac::CheckpointError);
  std::filesystem::remove(path);
}

TEST_CASE("unsupported version fails to load") {
  const std::string path = temp_path("tac_version.tac");
  {
    std::ofstream out(path, std::ios::binary);
    out << "TAC1";
    const unsigned char version2[4] = {2, 0, 0, 0};
    out.write(reinterpret_cast<const char*>(version2), 4);
  }
  try {
    (void)tac::load_checkpoint(path);
    FAIL("expected CheckpointError");
  } catch (const tac::CheckpointError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("config mismatch on load is an explicit error") {
  const TacConfig cfg = toy_config(11);
  tac::TacParams params = tac::tac_init(cfg);
  const std::string path = temp_path("tac_mismatch.tac");
  tac::save_checkpoint(params, cfg, path);

  TacConfig other = cfg;
  other.blocks = 2;
  CHECK_THROWS_AS((void)tac::load_checkpoint(path, other),
                  tac::CheckpointError);
  // Same config is accepted.
  CHECK_NOTHROW((void)tac::load_checkpoint(path, cfg));
  std::filesystem::remove(path);
}

TEST_CASE("trailing bytes after the last record are rejected") {
  const TacConfig cfg = toy_config(12);
  tac::TacParams params = tac::tac_init(cfg);
  const std::string path = temp_path("tac_trailing.tac");
  tac::save_checkpoint(params, cfg, path);
  std::ofstream(path, std::ios::binary | std::ios::app) << "x";
  CHECK_THROWS_AS((void)tac::load_checkpoint(path), tac::CheckpointError);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint round-trip preserves the forward output bitwise") {
  const TacConfig cfg = toy_config(13);
  tac::TacParams params = tac::tac_init(cfg);
  tac::Rng rng(14);
  Tensor curr = random_tensor({cfg.encoder_layers, cfg.tokens(),
                               cfg.encoder_dim}, rng);
  Tensor prior = random_tensor(curr.shape, rng);
  Tensor z_before = tac::tac_forward(curr, &prior, params, cfg);

  const std::string path = temp_path("tac_fwd_roundtrip.tac");
  tac::save_checkpoint(params, cfg, path);
  tac::LoadedCheckpoint loaded = tac::load_checkpoint(path);
  Tensor z_after = tac::tac_forward(curr, &prior, loaded.params, loaded.config);
  CHECK(std::memcmp(z_before.data.data(), z_after.data.data(),
                    z_before.numel() * sizeof(tac::real)) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("tensor record files round-trip") {
  tac::Rng rng(15);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({2, 2, 2}, rng);
  const std::string path = temp_path("tac_records.tsr");
  tac::write_tensor_file(path, {{"a", &a}, {"b", &b}});
  auto records = tac::read_tensor_file(path);
  REQUIRE(records.size() == 2);
  CHECK(records[0].first == "a");
  CHECK(records[1].first == "b");
  CHECK(std::memcmp(records[0].second.data.data(), a.data.data(),
                    a.numel() * sizeof(tac::real)) == 0);
  CHECK(records[1].second.shape == b.shape);
  std::filesystem::remove(path);
}

TEST_CASE("full connector gradients on the toy config") {
  const TacConfig cfg = toy_config(16);
  tac::TacParams params = tac::tac_init(cfg);
  tac::Rng rng(17);
  // A generic point: nonzero prefix bias so the cosine path carries gradient.
  for (tac::real& v : params.tfm.prefix.b_prior->value.data)
    v = static_cast<tac::real>(rng.uniform(-0.5, 0.5));

  Tensor curr = random_tensor({cfg.encoder_layers, cfg.tokens(),
                               cfg.encoder_dim}, rng);
  Tensor prior = random_tensor(curr.shape, rng);
  Tensor ct = random_tensor({cfg.tokens(), cfg.llm_dim}, rng);

  auto loss = [&]() -> tac::real {
    tac::TacCache cache;
    Tensor z = tac::tac_forward(curr, &prior, params, cfg, &cache);
    tac::tac_backward(ct, cache, params);
    return tac::dot_flat(z, ct);
  };

  tac::GradCheckReport report =
      tac::grad_check(loss, params.store, 1e-5, 1e-4);
  INFO("worst: ", report.worst_param, " err ", double(report.max_rel_err));
  CHECK(report.pass);
}
