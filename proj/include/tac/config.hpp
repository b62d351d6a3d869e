#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tac/errors.hpp"

namespace tac {

// Descending divisor chain of `layers` toward 1, each step dividing by the
// smallest prime factor (12 -> 6 -> 3 -> 1).
inline std::vector<std::size_t> channel_chain(std::size_t layers) {
  std::vector<std::size_t> chain{layers};
  std::size_t c = layers;
  while (c > 1) {
    std::size_t f = 2;
    while (c % f != 0) ++f;
    c /= f;
    chain.push_back(c);
  }
  return chain;
}

// Largest divisor of `channels` not exceeding the requested reduction, so the
// SE bottleneck width channels/r is always integral.
inline std::size_t effective_se_reduction(std::size_t channels,
                                          std::size_t requested) {
  std::size_t r = requested;
  if (channels < 4 && r > 2) r = 2;
  while (r > 1 && channels % r != 0) --r;
  return r == 0 ? 1 : r;
}

struct TacConfig {
  std::size_t encoder_layers = 12;  // L
  std::size_t grid = 37;            // patch grid side; N = grid^2
  std::size_t encoder_dim = 768;    // D
  std::size_t llm_dim = 4096;       // d
  std::size_t se_reduction = 4;     // requested r, clamped per stage
  std::size_t heads = 8;            // H
  std::size_t blocks = 2;           // B
  std::uint64_t seed = 0;

  std::size_t tokens() const { return grid * grid; }

  void validate() const {
    if (encoder_layers < 1 || grid < 1 || encoder_dim < 1 || llm_dim < 1 ||
        heads < 1 || blocks < 1 || se_reduction < 1) {
      throw ConfigError("config: all extents must be >= 1");
    }
    if (encoder_dim % heads != 0) {
      throw ConfigError("config: encoder dim " + std::to_string(encoder_dim) +
                        " not divisible by heads " + std::to_string(heads));
    }
    if (channel_chain(encoder_layers).back() != 1) {
      throw ConfigError("config: factor chain does not reach 1");
    }
  }

  bool operator==(const TacConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Flat key=value config files: '#' comments, blank lines ignored.

class KeyValueFile {
 public:
  static KeyValueFile parse_text(const std::string& text) {
    KeyValueFile kv;
    std::size_t pos = 0, line_no = 0;
    while (pos <= text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string::npos) eol = text.size();
      std::string line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++line_no;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto l = line.find_first_not_of(" \t\r");
      if (l == std::string::npos) continue;
      const auto r = line.find_last_not_of(" \t\r");
      line = line.substr(l, r - l + 1);
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        throw UsageError("config line " + std::to_string(line_no) +
                         ": expected key=value, got '" + line + "'");
      }
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t");
        const auto b = s.find_last_not_of(" \t");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) {
        throw UsageError("config line " + std::to_string(line_no) +
                         ": empty key");
      }
      kv.entries_[key] = value;
    }
    return kv;
  }

  static KeyValueFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return parse_text(text);
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
      std::size_t used = 0;
      const std::uint64_t v = std::stoull(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw UsageError("config key '" + key + "': not an unsigned integer: '" +
                       it->second + "'");
    }
  }

  double get_f64(const std::string& key, double fallback) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw UsageError("config key '" + key + "': not a number: '" +
                       it->second + "'");
    }
  }

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

inline TacConfig tac_config_from(const KeyValueFile& kv) {
  TacConfig c;
  c.encoder_layers = kv.get_u64("layers", c.encoder_layers);
  c.grid = kv.get_u64("grid", c.grid);
  c.encoder_dim = kv.get_u64("dim", c.encoder_dim);
  c.llm_dim = kv.get_u64("llm_dim", c.llm_dim);
  c.se_reduction = kv.get_u64("reduction", c.se_reduction);
  c.heads = kv.get_u64("heads", c.heads);
  c.blocks = kv.get_u64("blocks", c.blocks);
  c.seed = kv.get_u64("seed", c.seed);
  c.validate();
  return c;
}

}  // namespace tac
