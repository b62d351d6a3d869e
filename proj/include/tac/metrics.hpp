#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tac/errors.hpp"

// Temporal entity F1: extract change-describing keywords from report text
// (exact token-sequence matching, no stemming or lemmatization) and score
// generated against ground-truth reports with epsilon-smoothed precision,
// recall and F-beta.

namespace tac {

struct KeywordList {
  std::vector<std::string> words;  // lowercase, unique, insertion order
  std::string source;              // "builtin" or a file path

  // FNV-1a over the words with separators; printed with every report so
  // scores are always tied to a stated list.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const std::string& w : words) {
      for (char ch : w) {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ull;
      }
      h ^= static_cast<unsigned char>('\n');
      h *= 1099511628211ull;
    }
    return h;
  }
};

// Change-indicating radiology keywords shipped as the default reward list.
inline KeywordList builtin_keywords() {
  KeywordList list;
  list.source = "builtin";
  list.words = {"worsened",  "worsening",  "improved",   "improving",
                "increased", "increasing", "decreased",  "decreasing",
                "new",       "resolved",   "stable",     "unchanged",
                "enlarged",  "enlarging",  "persistent", "progressed",
                "progression", "interval"};
  return list;
}

// One keyword per line; '#' comments and blank lines ignored; entries are
// lowercased and deduplicated.
inline KeywordList load_keywords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open keyword list: " + path);
  KeywordList list;
  list.source = path;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string word;
    for (char ch : line) {
      if (!std::isspace(static_cast<unsigned char>(ch)))
        word.push_back(static_cast<char>(
            std::tolower(static_cast<unsigned char>(ch))));
      else if (!word.empty())
        word.push_back(' ');
    }
    while (!word.empty() && word.back() == ' ') word.pop_back();
    if (word.empty()) continue;
    if (seen.insert(word).second) list.words.push_back(word);
  }
  if (list.words.empty()) {
    throw UsageError("keyword list is empty: " + path);
  }
  return list;
}

using EntitySet = std::set<std::string>;

namespace detail {

inline std::vector<std::string> tokenize_lower(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char raw : text) {
    const unsigned char ch = static_cast<unsigned char>(raw);
    if (std::isalnum(ch)) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

}  // namespace detail

// A keyword matches when its exact token sequence appears in the text
// (case-folded, punctuation-delimited); the result is the set of unique
// matched keywords.
inline EntitySet extract_entities(const std::string& text,
                                  const KeywordList& keywords) {
  const std::vector<std::string> tokens = detail::tokenize_lower(text);
  EntitySet found;
  for (const std::string& kw : keywords.words) {
    const std::vector<std::string> kw_tokens = detail::tokenize_lower(kw);
    if (kw_tokens.empty() || kw_tokens.size() > tokens.size()) continue;
    for (std::size_t i = 0; i + kw_tokens.size() <= tokens.size(); ++i) {
      bool match = true;
      for (std::size_t j = 0; j < kw_tokens.size(); ++j) {
        if (tokens[i + j] != kw_tokens[j]) {
          match = false;
          break;
        }
      }
      if (match) {
        found.insert(kw);
        break;
      }
    }
  }
  return found;
}

struct TemporalScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t gt_count = 0;
  std::size_t gr_count = 0;
  std::size_t match_count = 0;
};

// P = (|gr∩gt|+eps)/(|gr|+eps), R = (|gr∩gt|+eps)/(|gt|+eps),
// F = (1+beta^2) P R / (beta^2 P + R). The epsilon in the numerator makes
// empty-vs-empty score 1.
inline TemporalScore temporal_f1(const EntitySet& gt, const EntitySet& gr,
                                 double beta = 1.0, double eps = 1e-10) {
  if (beta <= 0 || eps <= 0) {
    throw UsageError("temporal_f1: beta and eps must be positive");
  }
  TemporalScore s;
  s.gt_count = gt.size();
  s.gr_count = gr.size();
  std::vector<std::string> inter;
  std::set_intersection(gt.begin(), gt.end(), gr.begin(), gr.end(),
                        std::back_inserter(inter));
  s.match_count = inter.size();
  const double m = static_cast<double>(s.match_count);
  s.precision = (m + eps) / (static_cast<double>(s.gr_count) + eps);
  s.recall = (m + eps) / (static_cast<double>(s.gt_count) + eps);
  const double b2 = beta * beta;
  s.f1 = (1.0 + b2) * s.precision * s.recall /
         (b2 * s.precision + s.recall);
  return s;
}

struct CorpusSummary {
  std::vector<TemporalScore> per_pair;
  double mean_precision = 0;
  double mean_recall = 0;
  double mean_f1 = 0;
};

inline CorpusSummary corpus_f1(
    const std::vector<std::pair<std::string, std::string>>& pairs,
    const KeywordList& keywords, double beta = 1.0, double eps = 1e-10) {
  if (pairs.empty()) {
    throw UsageError("corpus_f1: empty pair list");
  }
  CorpusSummary summary;
  for (const auto& [gt_text, gr_text] : pairs) {
    const EntitySet gt = extract_entities(gt_text, keywords);
    const EntitySet gr = extract_entities(gr_text, keywords);
    summary.per_pair.push_back(temporal_f1(gt, gr, beta, eps));
  }
  for (const TemporalScore& s : summary.per_pair) {
    summary.mean_precision += s.precision;
    summary.mean_recall += s.recall;
    summary.mean_f1 += s.f1;
  }
  const double n = static_cast<double>(summary.per_pair.size());
  summary.mean_precision /= n;
  summary.mean_recall /= n;
  summary.mean_f1 /= n;
  return summary;
}

// Corpus file: UTF-8 lines, ground-truth text TAB generated text.
inline std::vector<std::pair<std::string, std::string>> load_pairs_tsv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open pairs file: " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw UsageError("pairs file line " + std::to_string(line_no) +
                       ": expected TAB-separated ground truth and generated "
                       "text");
    }
    pairs.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  if (pairs.empty()) throw UsageError("pairs file has no pairs: " + path);
  return pairs;
}

}  // namespace tac
