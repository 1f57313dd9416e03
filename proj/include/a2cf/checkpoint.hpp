#pragma once

// Versioned binary checkpoint: magic, version, dims, training config and
// every parameter tensor as little-endian IEEE-754 doubles.
//
//   "A2CFCKPT" | u32 version | u64 x 5 dims | config | u64 tensor count |
//   per tensor: u64 length, f64 x length

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "a2cf/common.hpp"
#include "a2cf/data.hpp"
#include "a2cf/model.hpp"

namespace a2cf {

inline constexpr std::array<char, 8> kCheckpointMagic{'A', '2', 'C', 'F', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  TrainConfig config;
};

namespace detail {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void u64(std::uint64_t v) {
    char bytes[8];
    for (int k = 0; k < 8; ++k) bytes[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    out_.write(bytes, 8);
  }
  void u32(std::uint32_t v) {
    char bytes[4];
    for (int k = 0; k < 4; ++k) bytes[k] = static_cast<char>((v >> (8 * k)) & 0xff);
    out_.write(bytes, 4);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  std::uint64_t u64() {
    unsigned char bytes[8];
    read(bytes, 8);
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | bytes[k];
    return v;
  }
  std::uint32_t u32() {
    unsigned char bytes[4];
    read(bytes, 4);
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | bytes[k];
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw Error("checkpoint truncated");
  }

 private:
  std::istream& in_;
};

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const ModelParams& params, const TrainConfig& c) {
  if (params.dims.item_aggregation != c.item_aggregation ||
      params.dims.user_aggregation != c.user_aggregation) {
    throw Error("checkpoint config ablation switches do not match the parameter shapes");
  }
  detail::BinaryWriter w(out);
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u32(kCheckpointVersion);
  const auto& d = params.dims;
  for (std::uint64_t v : {d.users, d.items, d.attributes, d.dim, d.layers}) w.u64(v);

  for (std::uint64_t v : {c.dim, c.layers}) w.u64(v);
  for (double v : {c.gamma, c.beta, c.epsilon, c.rating_max, c.learning_rate}) w.f64(v);
  w.u64(c.batch_size);
  w.f64(c.dropout);
  for (std::uint64_t v : {c.negatives, c.phase1_steps, c.phase2_steps, c.explain_size}) w.u64(v);
  w.u64((c.item_aggregation ? 1u : 0u) | (c.user_aggregation ? 2u : 0u));
  w.u64(c.seed);

  const auto tensors = params.tensors();
  w.u64(tensors.size());
  for (const auto& t : tensors) {
    w.u64(t.values.size());
    for (double v : t.values) w.f64(v);
  }
  if (!out) throw Error("failed writing checkpoint");
}

/// Parses into fresh objects; nothing is returned unless the whole file is
/// well formed.
inline Checkpoint read_checkpoint(std::istream& in) {
  detail::BinaryReader r(in);
  std::array<char, 8> magic{};
  r.read(magic.data(), magic.size());
  if (magic != kCheckpointMagic) throw Error("not an A2CF checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  ModelDims dims;
  dims.users = r.u64();
  dims.items = r.u64();
  dims.attributes = r.u64();
  dims.dim = r.u64();
  dims.layers = r.u64();
  constexpr std::uint64_t kSane = 1ULL << 32;
  if (dims.users > kSane || dims.items > kSane || dims.attributes > kSane || dims.dim > 65536 ||
      dims.layers > 1024) {
    throw Error("checkpoint header has implausible dimensions");
  }

  TrainConfig c;
  c.dim = r.u64();
  c.layers = r.u64();
  c.gamma = r.f64();
  c.beta = r.f64();
  c.epsilon = r.f64();
  c.rating_max = r.f64();
  c.learning_rate = r.f64();
  c.batch_size = r.u64();
  c.dropout = r.f64();
  c.negatives = r.u64();
  c.phase1_steps = r.u64();
  c.phase2_steps = r.u64();
  c.explain_size = r.u64();
  const std::uint64_t flags = r.u64();
  c.item_aggregation = (flags & 1u) != 0;
  c.user_aggregation = (flags & 2u) != 0;
  c.seed = r.u64();
  dims.item_aggregation = c.item_aggregation;
  dims.user_aggregation = c.user_aggregation;

  Checkpoint ckpt{ModelParams::zeros(dims), c};
  auto tensors = ckpt.params.tensors();
  if (r.u64() != tensors.size()) throw Error("checkpoint tensor count does not match dims");
  for (auto& t : tensors) {
    if (r.u64() != t.values.size()) throw Error("checkpoint tensor " + t.name + " has wrong size");
    for (double& v : t.values) v = r.f64();
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error("trailing bytes after checkpoint");
  return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                            const TrainConfig& config) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  write_checkpoint(out, params, config);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_checkpoint(in);
}

/// Throws when the checkpoint was trained on a corpus with other sizes.
inline void check_dims(const ModelParams& params, const Corpus& corpus) {
  const auto& d = params.dims;
  if (d.users != corpus.num_users() || d.items != corpus.num_items() ||
      d.attributes != corpus.num_attributes()) {
    throw Error("checkpoint dims (" + std::to_string(d.users) + " users, " +
                std::to_string(d.items) + " items, " + std::to_string(d.attributes) +
                " attributes) do not match corpus (" + std::to_string(corpus.num_users()) + ", " +
                std::to_string(corpus.num_items()) + ", " +
                std::to_string(corpus.num_attributes()) + ")");
  }
}

}  // namespace a2cf
