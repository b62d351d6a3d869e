// Command-line front door: model init/forward/gradcheck, the synthetic
// temporal-pair harness (gen, train-toy, eval-swap), the temporal entity F1
// metric, prompt assembly and heatmap export.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tac/tac.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
};

tac::KeyValueFile load_config_or_empty(const GlobalOpts& g) {
  if (g.config_path.empty()) return tac::KeyValueFile::parse_text("");
  return tac::KeyValueFile::parse_file(g.config_path);
}

tac::TacConfig resolve_config(const GlobalOpts& g) {
  tac::TacConfig cfg = tac::tac_config_from(load_config_or_empty(g));
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

void require_out(const GlobalOpts& g, const char* sub) {
  if (g.out_path.empty()) {
    throw tac::UsageError(std::string(sub) + ": --out is required");
  }
}

// --- init -------------------------------------------------------------------

int run_init(const GlobalOpts& g) {
  require_out(g, "init");
  const tac::TacConfig cfg = resolve_config(g);
  tac::TacParams params = tac::tac_init(cfg);
  tac::save_checkpoint(params, cfg, g.out_path);
  std::printf("wrote checkpoint %s (%zu tensors, %zu values)\n",
              g.out_path.c_str(), params.store.size(),
              params.store.total_values());
  return 0;
}

// --- forward ----------------------------------------------------------------

tac::Tensor read_single_tensor(const std::string& path) {
  auto records = tac::read_tensor_file(path);
  return std::move(records.front().second);
}

int run_forward(const GlobalOpts& g, const std::string& ckpt_path,
                const std::string& curr_path, const std::string& prior_path) {
  require_out(g, "forward");
  tac::LoadedCheckpoint loaded = tac::load_checkpoint(ckpt_path);
  tac::Tensor curr = read_single_tensor(curr_path);
  std::optional<tac::Tensor> prior;
  if (!prior_path.empty()) prior = read_single_tensor(prior_path);

  tac::Tensor z = tac::tac_forward(curr, prior ? &*prior : nullptr,
                                   loaded.params, loaded.config);
  tac::write_tensor_file(g.out_path, {{"z", &z}});
  std::printf("wrote %s: z shape %s%s\n", g.out_path.c_str(),
              z.shape_str().c_str(), prior ? "" : " (dummy prior)");
  return 0;
}

// --- gradcheck ----------------------------------------------------------------

// Full-connector gradient check at a generic point: random stacks, b_prior
// perturbed off its zero init so the cosine path carries gradient, loss is a
// fixed random weighting of the output.
int run_gradcheck(const GlobalOpts& g, double h, double tol, bool quiet) {
  tac::TacConfig cfg;
  if (!g.config_path.empty() || g.seed) {
    cfg = resolve_config(g);
  } else {
    // Default toy configuration keeps the run in seconds.
    cfg.encoder_layers = 12;
    cfg.grid = 3;
    cfg.encoder_dim = 8;
    cfg.llm_dim = 16;
    cfg.heads = 2;
    cfg.blocks = 1;
    cfg.seed = 7;
  }
  tac::TacParams params = tac::tac_init(cfg);
  tac::Rng rng(cfg.seed + 1);
  for (tac::real& v : params.tfm.prefix.b_prior->value.data)
    v = static_cast<tac::real>(rng.uniform(-0.5, 0.5));

  tac::Tensor curr({cfg.encoder_layers, cfg.tokens(), cfg.encoder_dim});
  tac::Tensor prior(curr.shape);
  for (tac::real& v : curr.data) v = static_cast<tac::real>(rng.gaussian());
  for (tac::real& v : prior.data) v = static_cast<tac::real>(rng.gaussian());
  tac::Tensor weights({cfg.tokens(), cfg.llm_dim});
  for (tac::real& v : weights.data) v = static_cast<tac::real>(rng.gaussian());

  auto loss_fn = [&]() -> tac::real {
    tac::TacCache cache;
    tac::Tensor z = tac::tac_forward(curr, &prior, params, cfg, &cache);
    tac::tac_backward(weights, cache, params);
    return tac::dot_flat(z, weights);
  };

  tac::GradCheckReport report = tac::grad_check(
      loss_fn, params.store, static_cast<tac::real>(h),
      static_cast<tac::real>(tol));
  if (!quiet) {
    for (const auto& [name, err] : report.per_param)
      std::printf("%-24s max rel err %.3e\n", name.c_str(), double(err));
  }
  if (!report.failure.empty()) {
    std::fprintf(stderr, "gradcheck numeric failure: %s\n",
                 report.failure.c_str());
    return 2;
  }
  std::printf("gradcheck %s: %zu parameters, worst %s (%.3e), tol %.1e\n",
              report.pass ? "PASS" : "FAIL", report.per_param.size(),
              report.worst_param.c_str(), double(report.max_rel_err), tol);
  return report.pass ? 0 : 2;
}

// --- gen ----------------------------------------------------------------------

tac::SyntheticPairSpec resolve_pair_spec(const GlobalOpts& g) {
  const tac::KeyValueFile kv = load_config_or_empty(g);
  tac::TacConfig cfg = tac::tac_config_from(kv);
  if (g.seed) cfg.seed = *g.seed;
  tac::SyntheticPairSpec spec = tac::pair_spec_from(kv, cfg);
  if (g.seed) spec.seed = *g.seed;
  return spec;
}

int run_gen(const GlobalOpts& g) {
  require_out(g, "gen");
  const tac::SyntheticPairSpec spec = resolve_pair_spec(g);
  const tac::PairSet set = tac::gen_pairs(spec);
  fs::create_directories(g.out_path);

  std::ofstream labels(fs::path(g.out_path) / "labels.tsv");
  labels << "index\tsplit\tlabel\tcurr_file\tprior_file\n";
  auto dump = [&](const std::vector<tac::LabeledPair>& pairs,
                  const char* split, std::size_t base) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      char curr_name[32], prior_name[32];
      std::snprintf(curr_name, sizeof curr_name, "curr_%05zu.tsr", base + i);
      std::snprintf(prior_name, sizeof prior_name, "prior_%05zu.tsr", base + i);
      tac::write_tensor_file((fs::path(g.out_path) / curr_name).string(),
                             {{"curr", &pairs[i].curr}});
      tac::write_tensor_file((fs::path(g.out_path) / prior_name).string(),
                             {{"prior", &pairs[i].prior}});
      labels << base + i << '\t' << split << '\t'
             << tac::direction_name(pairs[i].label) << '\t' << curr_name
             << '\t' << prior_name << '\n';
    }
  };
  dump(set.train, "train", 0);
  dump(set.test, "test", set.train.size());
  std::printf("wrote %zu train + %zu test pairs to %s\n", set.train.size(),
              set.test.size(), g.out_path.c_str());
  return 0;
}

// --- train-toy / eval-swap ------------------------------------------------------

int run_train_toy(const GlobalOpts& g) {
  require_out(g, "train-toy");
  const tac::KeyValueFile kv = load_config_or_empty(g);
  tac::TacConfig cfg = tac::tac_config_from(kv);
  if (g.seed) cfg.seed = *g.seed;
  tac::SyntheticPairSpec spec = tac::pair_spec_from(kv, cfg);
  const tac::ToyTrainConfig train_cfg = tac::train_config_from(kv);

  const tac::PairSet set = tac::gen_pairs(spec);
  tac::TacParams params = tac::tac_init(cfg);
  tac::ProbeParams probe = tac::probe_init(cfg.llm_dim, cfg.seed + 1);

  const tac::SwapReport baseline = tac::eval_swap(set.test, params, probe, cfg);
  const tac::TrainResult result =
      tac::train_toy(set.train, params, probe, cfg, train_cfg);
  const tac::SwapReport trained = tac::eval_swap(set.test, params, probe, cfg);

  fs::create_directories(g.out_path);
  tac::save_checkpoint(params, cfg,
                       (fs::path(g.out_path) / "connector.tac").string());
  tac::write_tensor_file((fs::path(g.out_path) / "probe.tsr").string(),
                         {{"probe.w", &probe.w->value},
                          {"probe.b", &probe.b->value}});
  {
    std::ofstream curve(fs::path(g.out_path) / "loss_curve.tsv");
    curve << "epoch\tloss\n";
    for (std::size_t e = 0; e < result.loss_curve.size(); ++e)
      curve << e << '\t' << double(result.loss_curve[e]) << '\n';
  }
  {
    std::ofstream metrics(fs::path(g.out_path) / "metrics.txt");
    metrics << "train_accuracy=" << double(result.train_accuracy) << '\n'
            << "test_accuracy=" << double(trained.accuracy) << '\n'
            << "flip_rate=" << double(trained.flip_rate) << '\n'
            << "chance_flip_rate=" << double(trained.chance_flip_rate) << '\n'
            << "baseline_flip_rate=" << double(baseline.flip_rate) << '\n'
            << "baseline_chance_flip_rate="
            << double(baseline.chance_flip_rate) << '\n';
  }
  std::printf(
      "loss %.4f -> %.4f | train acc %.3f | test acc %.3f | flip %.3f | "
      "untrained baseline flip %.3f (chance %.3f)\n",
      double(result.loss_curve.front()), double(result.loss_curve.back()),
      double(result.train_accuracy), double(trained.accuracy),
      double(trained.flip_rate), double(baseline.flip_rate),
      double(baseline.chance_flip_rate));
  return 0;
}

int run_eval_swap(const GlobalOpts& g, const std::string& ckpt_path,
                  const std::string& probe_path) {
  const tac::KeyValueFile kv = load_config_or_empty(g);
  tac::TacConfig cfg = tac::tac_config_from(kv);
  if (g.seed) cfg.seed = *g.seed;
  tac::SyntheticPairSpec spec = tac::pair_spec_from(kv, cfg);

  tac::LoadedCheckpoint loaded = tac::load_checkpoint(ckpt_path, cfg);
  tac::ProbeParams probe = tac::probe_init(cfg.llm_dim, cfg.seed + 1);
  auto records = tac::read_tensor_file(probe_path);
  for (auto& [name, value] : records) {
    tac::Param* p = probe.store.find(name);
    if (!p) throw tac::CheckpointError("unknown probe tensor '" + name + "'");
    if (p->value.shape != value.shape) {
      throw tac::CheckpointError("probe tensor '" + name + "' shape mismatch");
    }
    p->value = std::move(value);
  }

  const tac::PairSet set = tac::gen_pairs(spec);
  const tac::SwapReport report =
      tac::eval_swap(set.test, loaded.params, probe, cfg);
  std::printf("test accuracy\t%.4f\nflip rate\t%.4f\nchance flip\t%.4f\n",
              double(report.accuracy), double(report.flip_rate),
              double(report.chance_flip_rate));
  return 0;
}

// --- f1temp ---------------------------------------------------------------------

int run_f1temp(const std::string& keywords_arg, const std::string& pairs_path,
               double beta, double eps) {
  const tac::KeywordList keywords = (keywords_arg.empty() ||
                                     keywords_arg == "default")
                                        ? tac::builtin_keywords()
                                        : tac::load_keywords(keywords_arg);
  const auto pairs = tac::load_pairs_tsv(pairs_path);
  const tac::CorpusSummary summary =
      tac::corpus_f1(pairs, keywords, beta, eps);

  std::printf("# keywords\t%s\t%zu entries\thash\t%016" PRIx64 "\n",
              keywords.source.c_str(), keywords.words.size(), keywords.hash());
  std::printf("# pair\tprecision\trecall\tf1\t|gt|\t|gr|\t|match|\n");
  for (std::size_t i = 0; i < summary.per_pair.size(); ++i) {
    const tac::TemporalScore& s = summary.per_pair[i];
    std::printf("%zu\t%.6f\t%.6f\t%.6f\t%zu\t%zu\t%zu\n", i, s.precision,
                s.recall, s.f1, s.gt_count, s.gr_count, s.match_count);
  }
  std::printf("mean\t%.6f\t%.6f\t%.6f\n", summary.mean_precision,
              summary.mean_recall, summary.mean_f1);
  return 0;
}

// --- prompt ---------------------------------------------------------------------

int run_prompt(const std::string& sections_path, const std::string& target) {
  tac::ReportSections sections;
  if (!sections_path.empty()) sections = tac::load_sections(sections_path);
  if (target == "impression") {
    sections.target = tac::ReportSections::Target::Impression;
  } else if (target == "findings") {
    sections.target = tac::ReportSections::Target::Findings;
  } else if (!target.empty()) {
    throw tac::UsageError("prompt: --target must be findings or impression");
  }
  const tac::PromptPair prompts = tac::build_prompt(sections);
  std::printf("[system]\n%s\n[clinical]\n%s\n", prompts.system.c_str(),
              prompts.clinical.c_str());
  return 0;
}

// --- heatmap --------------------------------------------------------------------

int run_heatmap(const GlobalOpts& g, const std::string& in_path,
                std::size_t grid, std::size_t factor, double sigma) {
  require_out(g, "heatmap");
  tac::Tensor features = read_single_tensor(in_path);
  tac::emit_heatmap(features, grid, factor, sigma, g.out_path);
  std::printf("wrote %s (%zux%zu)\n", g.out_path.c_str(), grid * factor,
              grid * factor);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal alignment connector toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--config", g.config_path, "key=value config file");
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--out", g.out_path, "output path");

  auto* init = app.add_subcommand("init", "initialize and write a checkpoint");

  auto* forward = app.add_subcommand("forward", "run the connector forward");
  std::string ckpt_path, curr_path, prior_path;
  forward->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  forward->add_option("--curr", curr_path, "current stack tensor file")
      ->required();
  forward->add_option("--prior", prior_path,
                      "prior stack tensor file (omit for dummy prior)");

  auto* gradcheck = app.add_subcommand("gradcheck",
                                       "finite-difference gradient check");
  double gc_h = 1e-5, gc_tol = 1e-4;
  bool gc_quiet = false;
  gradcheck->add_option("--step", gc_h, "central difference step");
  gradcheck->add_option("--tol", gc_tol, "relative error tolerance");
  gradcheck->add_flag("--quiet", gc_quiet, "suppress per-parameter lines");

  auto* gen = app.add_subcommand("gen", "emit synthetic temporal pairs");

  auto* train = app.add_subcommand("train-toy",
                                   "train connector + probe on synthetic pairs");

  auto* eval = app.add_subcommand("eval-swap",
                                  "swap evaluation of a trained run");
  std::string eval_ckpt, eval_probe;
  eval->add_option("--ckpt", eval_ckpt, "trained checkpoint")->required();
  eval->add_option("--probe", eval_probe, "probe tensor file")->required();

  auto* f1 = app.add_subcommand("f1temp", "temporal entity F1 over a corpus");
  std::string f1_keywords = "default", f1_pairs;
  double f1_beta = 1.0, f1_eps = 1e-10;
  f1->add_option("--keywords", f1_keywords,
                 "'default' or a keyword list file");
  f1->add_option("--pairs", f1_pairs, "TSV: ground truth TAB generated")
      ->required();
  f1->add_option("--beta", f1_beta, "F-beta weight");
  f1->add_option("--eps", f1_eps, "smoothing epsilon");

  auto* prompt = app.add_subcommand("prompt", "assemble system/clinical prompts");
  std::string prompt_sections, prompt_target;
  prompt->add_option("--sections", prompt_sections, "sections file");
  prompt->add_option("--target", prompt_target, "findings|impression");

  auto* heatmap = app.add_subcommand("heatmap", "render features to a PGM");
  std::string hm_in;
  std::size_t hm_grid = 37, hm_factor = 14;
  double hm_sigma = 2.0;
  heatmap->add_option("--in", hm_in, "features tensor file")->required();
  heatmap->add_option("--grid", hm_grid, "patch grid side");
  heatmap->add_option("--factor", hm_factor, "nearest-neighbor upsample factor");
  heatmap->add_option("--sigma", hm_sigma, "Gaussian blur sigma");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cout, std::cerr);
    return 1;
  }

  try {
    if (init->parsed()) return run_init(g);
    if (forward->parsed()) return run_forward(g, ckpt_path, curr_path, prior_path);
    if (gradcheck->parsed()) return run_gradcheck(g, gc_h, gc_tol, gc_quiet);
    if (gen->parsed()) return run_gen(g);
    if (train->parsed()) return run_train_toy(g);
    if (eval->parsed()) return run_eval_swap(g, eval_ckpt, eval_probe);
    if (f1->parsed()) return run_f1temp(f1_keywords, f1_pairs, f1_beta, f1_eps);
    if (prompt->parsed()) return run_prompt(prompt_sections, prompt_target);
    if (heatmap->parsed())
      return run_heatmap(g, hm_in, hm_grid, hm_factor, hm_sigma);
  } catch (const tac::UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
