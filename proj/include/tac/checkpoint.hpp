#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "tac/config.hpp"
#include "tac/connector.hpp"
#include "tac/errors.hpp"
#include "tac/tensor.hpp"

// Little-endian binary checkpoint container:
//   magic "TAC1" | u32 version | u32 config word count | u64 config words
//   | u64 tensor count | records
// Each record: u32 name length | name bytes | u32 rank | u64 extents | f64 data.
// Tensor data is f64 on disk regardless of the build's working precision, so
// round-trips are bit-exact in the default double build.

namespace tac {

namespace io {

constexpr char kMagic[4] = {'T', 'A', 'C', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kConfigWords = 8;

class Writer {
 public:
  explicit Writer(const std::string& path)
      : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw CheckpointError("cannot open for writing: " + path);
  }

  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw CheckpointError("write failed: " + path_);
  }

  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 4);
  }

  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    bytes(b, 8);
  }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void f64_array(const real* data, std::size_t n) {
    buf_.resize(n * 8);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t v = std::bit_cast<std::uint64_t>(double(data[i]));
      for (int k = 0; k < 8; ++k)
        buf_[i * 8 + k] = static_cast<unsigned char>(v >> (8 * k));
    }
    bytes(buf_.data(), buf_.size());
  }

 private:
  std::ofstream out_;
  std::string path_;
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& path)
      : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw CheckpointError("cannot open for reading: " + path);
  }

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw CheckpointError("truncated file: " + path_);
    }
  }

  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  void f64_array(real* data, std::size_t n) {
    buf_.resize(n * 8);
    bytes(buf_.data(), buf_.size());
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t v = 0;
      for (int k = 0; k < 8; ++k)
        v |= std::uint64_t(buf_[i * 8 + k]) << (8 * k);
      data[i] = static_cast<real>(std::bit_cast<double>(v));
    }
  }

  bool at_eof() {
    in_.peek();
    return in_.eof();
  }

  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
  std::vector<unsigned char> buf_;
};

inline void write_record(Writer& w, const std::string& name, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape) w.u64(e);
  w.f64_array(t.data.data(), t.numel());
}

inline std::pair<std::string, Tensor> read_record(Reader& r) {
  const std::uint32_t name_len = r.u32();
  if (name_len > 4096) {
    throw CheckpointError("implausible tensor name length in " + r.path());
  }
  std::string name(name_len, '\0');
  r.bytes(name.data(), name_len);
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw CheckpointError("implausible tensor rank in " + r.path());
  std::vector<std::size_t> shape(rank);
  std::size_t numel = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const std::uint64_t e = r.u64();
    if (e == 0 || e > (std::uint64_t(1) << 32)) {
      throw CheckpointError("implausible tensor extent in " + r.path());
    }
    shape[i] = static_cast<std::size_t>(e);
    numel *= shape[i];
  }
  Tensor t(std::move(shape));
  r.f64_array(t.data.data(), numel);
  return {std::move(name), std::move(t)};
}

}  // namespace io

inline void save_checkpoint(const TacParams& params, const TacConfig& cfg,
                            const std::string& path) {
  io::Writer w(path);
  w.bytes(io::kMagic, 4);
  w.u32(io::kVersion);
  w.u32(io::kConfigWords);
  w.u64(cfg.encoder_layers);
  w.u64(cfg.grid);
  w.u64(cfg.encoder_dim);
  w.u64(cfg.llm_dim);
  w.u64(cfg.se_reduction);
  w.u64(cfg.heads);
  w.u64(cfg.blocks);
  w.u64(cfg.seed);
  auto items = params.store.params();
  w.u64(items.size());
  for (const Param* p : items) io::write_record(w, p->name, p->value);
}

struct LoadedCheckpoint {
  TacParams params;
  TacConfig config;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  io::Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, io::kMagic, 4) != 0) {
    throw CheckpointError("bad magic in " + path + " (not a checkpoint)");
  }
  const std::uint32_t version = r.u32();
  if (version != io::kVersion) {
    throw CheckpointError("unsupported checkpoint version " +
                          std::to_string(version) + " in " + path);
  }
  const std::uint32_t words = r.u32();
  if (words != io::kConfigWords) {
    throw CheckpointError("unexpected config block size in " + path);
  }
  TacConfig cfg;
  cfg.encoder_layers = static_cast<std::size_t>(r.u64());
  cfg.grid = static_cast<std::size_t>(r.u64());
  cfg.encoder_dim = static_cast<std::size_t>(r.u64());
  cfg.llm_dim = static_cast<std::size_t>(r.u64());
  cfg.se_reduction = static_cast<std::size_t>(r.u64());
  cfg.heads = static_cast<std::size_t>(r.u64());
  cfg.blocks = static_cast<std::size_t>(r.u64());
  cfg.seed = r.u64();
  cfg.validate();

  detail::TacStructure s = detail::build_tac(cfg);
  const std::uint64_t count = r.u64();
  if (count != s.params.store.size()) {
    throw CheckpointError("tensor count " + std::to_string(count) +
                          " does not match config-implied parameter set (" +
                          std::to_string(s.params.store.size()) + ") in " +
                          path);
  }
  std::vector<bool> seen(count, false);
  auto items = s.params.store.params();
  for (std::uint64_t i = 0; i < count; ++i) {
    auto [name, value] = io::read_record(r);
    Param* p = s.params.store.find(name);
    if (!p) {
      throw CheckpointError("unknown tensor '" + name + "' in " + path);
    }
    if (p->value.shape != value.shape) {
      throw CheckpointError("tensor '" + name + "' has shape " +
                            value.shape_str() + ", expected " +
                            p->value.shape_str() + " in " + path);
    }
    std::size_t idx = 0;
    for (; idx < items.size(); ++idx)
      if (items[idx] == p) break;
    if (seen[idx]) {
      throw CheckpointError("duplicate tensor '" + name + "' in " + path);
    }
    seen[idx] = true;
    p->value = std::move(value);
  }
  if (!r.at_eof()) {
    throw CheckpointError("trailing bytes after last tensor in " + path);
  }
  return {std::move(s.params), cfg};
}

inline LoadedCheckpoint load_checkpoint(const std::string& path,
                                        const TacConfig& expected) {
  LoadedCheckpoint loaded = load_checkpoint(path);
  if (!(loaded.config == expected)) {
    throw CheckpointError("config mismatch: checkpoint " + path +
                          " was written with a different configuration");
  }
  return loaded;
}

// ---------------------------------------------------------------------------
// Standalone tensor files: a sequence of checkpoint records until EOF.

inline void write_tensor_file(
    const std::string& path,
    const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  io::Writer w(path);
  for (const auto& [name, t] : tensors) io::write_record(w, name, *t);
}

inline std::vector<std::pair<std::string, Tensor>> read_tensor_file(
    const std::string& path) {
  io::Reader r(path);
  std::vector<std::pair<std::string, Tensor>> out;
  while (!r.at_eof()) out.push_back(io::read_record(r));
  if (out.empty()) throw CheckpointError("no tensor records in " + path);
  return out;
}

}  // namespace tac
