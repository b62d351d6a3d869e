#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "tac/metrics.hpp"
#include "tac/prompt.hpp"

using tac::EntitySet;

TEST_CASE("extraction finds listed keywords only") {
  const tac::KeywordList kw = tac::builtin_keywords();
  CHECK(tac::extract_entities("pleural effusion has worsened.", kw) ==
        EntitySet{"worsened"});
  CHECK(tac::extract_entities(
            "The pleural effusion is noted again on the current scan.", kw) ==
        EntitySet{});
  CHECK(tac::extract_entities("Worsening? worsened, WORSENED!", kw) ==
        EntitySet{"worsened", "worsening"});
}

TEST_CASE("no stemming: inflected forms do not match") {
  tac::KeywordList kw;
  kw.source = "builtin";
  kw.words = {"worsened"};
  CHECK(tac::extract_entities("Worsening? worsened, WORSENED!", kw) ==
        EntitySet{"worsened"});
  CHECK(tac::extract_entities("clearly worsening today", kw) == EntitySet{});
}

TEST_CASE("extraction is case-insensitive and idempotent") {
  const tac::KeywordList kw = tac::builtin_keywords();
  const std::string text =
      "New consolidation; effusion UNCHANGED, heart size stable.";
  std::string upper = text;
  std::transform(upper.begin(), upper.end(), upper.begin(), ::toupper);
  CHECK(tac::extract_entities(text, kw) == tac::extract_entities(upper, kw));
  CHECK(tac::extract_entities(text, kw) ==
        EntitySet{"new", "unchanged", "stable"});
}

TEST_CASE("multi-word keywords match consecutive tokens") {
  tac::KeywordList kw;
  kw.source = "builtin";
  kw.words = {"interval change", "new"};
  CHECK(tac::extract_entities("No interval change in the effusion.", kw) ==
        EntitySet{"interval change"});
  CHECK(tac::extract_entities("interval. change", kw) ==
        EntitySet{"interval change"});  // tokenization ignores punctuation
  CHECK(tac::extract_entities("interval of change", kw) == EntitySet{});
}

TEST_CASE("temporal_f1 worked examples") {
  SUBCASE("matching single entity scores exactly 1") {
    const tac::TemporalScore s =
        tac::temporal_f1({"worsened"}, {"worsened"});
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 1.0);
    CHECK(s.f1 == 1.0);
  }
  SUBCASE("missing entity scores ~0") {
    const tac::TemporalScore s = tac::temporal_f1({"worsened"}, {});
    CHECK(s.precision == 1.0);  // (0 + eps) / (0 + eps)
    CHECK(s.recall == doctest::Approx(1e-10).epsilon(1e-3));
    CHECK(s.f1 < 1e-9);
  }
  SUBCASE("empty vs empty scores 1 through the epsilon numerator") {
    const tac::TemporalScore s = tac::temporal_f1({}, {});
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 1.0);
    CHECK(s.f1 == 1.0);
  }
}

TEST_CASE("f1 stays in [0,1] and beta=1 equals 2PR/(P+R)") {
  const EntitySet gt{"worsened", "new", "stable"};
  const EntitySet gr{"worsened", "improved"};
  const tac::TemporalScore s = tac::temporal_f1(gt, gr);
  CHECK(s.f1 >= 0.0);
  CHECK(s.f1 <= 1.0);
  CHECK(s.f1 == doctest::Approx(2 * s.precision * s.recall /
                                (s.precision + s.recall)).epsilon(1e-15));
}

TEST_CASE("precision and recall swap roles under gt/gr exchange") {
  const EntitySet a{"worsened", "new"};
  const EntitySet b{"worsened"};
  const tac::TemporalScore ab = tac::temporal_f1(a, b);
  const tac::TemporalScore ba = tac::temporal_f1(b, a);
  CHECK(ab.precision == doctest::Approx(ba.recall).epsilon(1e-15));
  CHECK(ab.recall == doctest::Approx(ba.precision).epsilon(1e-15));
  // Asymmetric counterexample at beta=1: |gt| != |gr| changes nothing for
  // f1 (harmonic mean is symmetric) but P/R differ.
  CHECK(ab.precision != ab.recall);
  // Equal-cardinality sets score symmetrically.
  const EntitySet c{"stable"};
  const EntitySet d{"improved"};
  CHECK(tac::temporal_f1(c, d).f1 ==
        doctest::Approx(tac::temporal_f1(d, c).f1).epsilon(1e-15));
}

TEST_CASE("adding an unused keyword changes nothing") {
  tac::KeywordList kw = tac::builtin_keywords();
  const std::string gt = "effusion has worsened";
  const std::string gen = "worsened effusion again";
  const tac::CorpusSummary before = tac::corpus_f1({{gt, gen}}, kw);
  kw.words.push_back("zebra");
  const tac::CorpusSummary after = tac::corpus_f1({{gt, gen}}, kw);
  CHECK(before.mean_f1 == after.mean_f1);
  CHECK(before.mean_precision == after.mean_precision);
}

TEST_CASE("corpus_f1 means and permutation invariance") {
  const tac::KeywordList kw = tac::builtin_keywords();
  std::vector<std::pair<std::string, std::string>> pairs = {
      {"effusion worsened", "effusion worsened"},   // 1.0
      {"effusion worsened", "no temporal words"},   // ~0.0
  };
  const tac::CorpusSummary s = tac::corpus_f1(pairs, kw);
  CHECK(s.mean_f1 == doctest::Approx(0.5).epsilon(1e-9));

  std::swap(pairs[0], pairs[1]);
  CHECK(tac::corpus_f1(pairs, kw).mean_f1 == doctest::Approx(s.mean_f1));

  const tac::CorpusSummary same = tac::corpus_f1(
      {{"stable effusion", "stable effusion"}, {"new mass", "new mass"}}, kw);
  CHECK(same.mean_f1 == 1.0);

  CHECK_THROWS_AS((void)tac::corpus_f1({}, kw), tac::UsageError);
}

TEST_CASE("keyword list file load: comments, case, duplicates") {
  const auto path =
      (std::filesystem::temp_directory_path() / "tac_kw.txt").string();
  std::ofstream(path) << "# change words\nWorsened\n\nimproved\nworsened\n"
                      << "interval change\n";
  const tac::KeywordList kw = tac::load_keywords(path);
  CHECK(kw.words == std::vector<std::string>{"worsened", "improved",
                                             "interval change"});
  CHECK(kw.source == path);
  CHECK(kw.hash() != tac::builtin_keywords().hash());
  std::filesystem::remove(path);
}

TEST_CASE("prompt assembly") {
  SUBCASE("no sections: bare base instruction") {
    const tac::PromptPair p = tac::build_prompt({});
    CHECK(p.clinical ==
          "Provide a detailed description of the findings in the radiology "
          "image.");
    CHECK(p.system ==
          "The assistant specialised in comparing Chest X-ray images, "
          "identifying differences, and noting temporal changes.");
  }
  SUBCASE("sections in fixed order") {
    tac::ReportSections s;
    s.indication = "Dyspnea and cough, right-sided back pain.";
    s.history = "Intubation with pulmonary edema.";
    s.comparison = "Chest radiographs on ___ and CT chest without contrast "
                   "on ___.";
    s.technique = "Portable upright chest radiograph.";
    const tac::PromptPair p = tac::build_prompt(s);
    CHECK(p.clinical ==
          "Provide a detailed description of the findings in the radiology "
          "image. Following clinical context:\n"
          "Indication: Dyspnea and cough, right-sided back pain.\n"
          "History: Intubation with pulmonary edema.\n"
          "Comparison: Chest radiographs on ___ and CT chest without contrast "
          "on ___.\n"
          "Technique: Portable upright chest radiograph.");
  }
  SUBCASE("subset keeps the fixed order and skips absences") {
    tac::ReportSections s;
    s.technique = "PA and lateral.";
    s.indication = "Cough.";
    const tac::PromptPair p = tac::build_prompt(s);
    CHECK(p.clinical ==
          "Provide a detailed description of the findings in the radiology "
          "image. Following clinical context:\n"
          "Indication: Cough.\n"
          "Technique: PA and lateral.");
  }
  SUBCASE("impression target swaps the noun") {
    tac::ReportSections s;
    s.target = tac::ReportSections::Target::Impression;
    const tac::PromptPair p = tac::build_prompt(s);
    CHECK(p.clinical ==
          "Provide a detailed description of the impression in the radiology "
          "image.");
  }
}

TEST_CASE("sections file parsing") {
  const auto path =
      (std::filesystem::temp_directory_path() / "tac_sections.txt").string();
  std::ofstream(path) << "Indication: Cough.\nTechnique: Portable AP.\n"
                      << "Target: impression\n";
  const tac::ReportSections s = tac::load_sections(path);
  CHECK(s.indication == "Cough.");
  CHECK(s.technique == "Portable AP.");
  CHECK_FALSE(s.history.has_value());
  CHECK(s.target == tac::ReportSections::Target::Impression);
  std::filesystem::remove(path);

  std::ofstream(path) << "Bogus: nope\n";
  CHECK_THROWS_AS((void)tac::load_sections(path), tac::UsageError);
  std::filesystem::remove(path);
}

TEST_CASE("pairs TSV loader") {
  const auto path =
      (std::filesystem::temp_directory_path() / "tac_pairs.tsv").string();
  std::ofstream(path) << "gt one\tgen one\ngt two\tgen two\n";
  const auto pairs = tac::load_pairs_tsv(path);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].first == "gt one");
  CHECK(pairs[1].second == "gen two");
  std::filesystem::remove(path);

  std::ofstream(path) << "no tab here\n";
  CHECK_THROWS_AS((void)tac::load_pairs_tsv(path), tac::UsageError);
  std::filesystem::remove(path);
}
