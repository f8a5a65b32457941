#pragma once

// Checkpoint file: a text manifest followed by raw little-endian float32 blocks.
//
//   logcad-checkpoint 1
//   meta <key> <value>             (any number)
//   config <key> <value>           (any number)
//   vocab <count>
//   <token>                        (count lines, in id order)
//   tensor <name> f32 <d0>x<d1>... <byte offset> <byte count>
//   end
//   <blocks, in manifest order; offsets are relative to the first byte after "end\n">

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "logcad/tensor.hpp"

namespace logcad {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  struct Block {
    std::string name;
    Shape shape;
    std::vector<float> data;
  };

  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::string> vocab;
  std::vector<Block> tensors;

  std::optional<std::string> meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    return std::nullopt;
  }

  const Block* find(const std::string& name) const {
    for (const auto& b : tensors)
      if (b.name == name) return &b;
    return nullptr;
  }

  template <typename T>
  void add(const std::string& name, const Tensor<T>& t) {
    Block b{name, t.shape(), {}};
    b.data.reserve(t.size());
    for (auto v : t.values()) b.data.push_back(static_cast<float>(v));
    tensors.push_back(std::move(b));
  }

  template <typename T>
  void copy_into(const std::string& name, Tensor<T>& t) const {
    const Block* b = find(name);
    if (b == nullptr) throw CheckpointError("checkpoint has no tensor '" + name + "'");
    if (b->shape != t.shape())
      throw CheckpointError("tensor '" + name + "' has shape " + shape_string(b->shape) + ", expected " +
                            shape_string(t.shape()));
    std::transform(b->data.begin(), b->data.end(), t.values().begin(), [](float v) { return static_cast<T>(v); });
  }
};

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  return v;
}

inline std::string dims_string(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s;
}

inline Shape parse_dims(const std::string& s) {
  Shape shape;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) shape.push_back(static_cast<std::size_t>(std::stoull(part)));
  return shape;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out << "logcad-checkpoint 1\n";
  for (const auto& [k, v] : ckpt.meta) out << "meta " << k << ' ' << v << '\n';
  for (const auto& [k, v] : ckpt.config) out << "config " << k << ' ' << v << '\n';
  out << "vocab " << ckpt.vocab.size() << '\n';
  for (const auto& tok : ckpt.vocab) out << tok << '\n';
  std::size_t offset = 0;
  for (const auto& b : ckpt.tensors) {
    const std::size_t bytes = b.data.size() * sizeof(float);
    out << "tensor " << b.name << " f32 " << detail::dims_string(b.shape) << ' ' << offset << ' ' << bytes << '\n';
    offset += bytes;
  }
  out << "end\n";
  for (const auto& b : ckpt.tensors) {
    std::vector<std::uint32_t> raw(b.data.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &b.data[i], sizeof bits);
      raw[i] = detail::to_little_endian(bits);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(std::uint32_t)));
  }
  if (!out) throw CheckpointError("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint ckpt;
  std::string line;
  if (!std::getline(in, line) || line != "logcad-checkpoint 1") throw CheckpointError("not a logcad checkpoint");
  struct Pending {
    std::size_t offset, bytes;
  };
  std::vector<Pending> pending;
  bool ended = false;
  while (!ended && std::getline(in, line)) {
    std::istringstream fields(line);
    std::string kind;
    fields >> kind;
    if (kind == "meta" || kind == "config") {
      std::string key, value;
      fields >> key;
      std::getline(fields >> std::ws, value);
      (kind == "meta" ? ckpt.meta : ckpt.config).emplace_back(key, value);
    } else if (kind == "vocab") {
      std::size_t n = 0;
      fields >> n;
      ckpt.vocab.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw CheckpointError("truncated vocabulary");
        ckpt.vocab.push_back(line);
      }
    } else if (kind == "tensor") {
      std::string name, dtype, dims;
      Pending p{};
      fields >> name >> dtype >> dims >> p.offset >> p.bytes;
      if (!fields || dtype != "f32") throw CheckpointError("bad tensor line: " + line);
      Checkpoint::Block b{name, detail::parse_dims(dims), {}};
      if (shape_size(b.shape) * sizeof(float) != p.bytes) throw CheckpointError("size mismatch for " + name);
      ckpt.tensors.push_back(std::move(b));
      pending.push_back(p);
    } else if (kind == "end") {
      ended = true;
    } else {
      throw CheckpointError("unexpected manifest line: " + line);
    }
  }
  if (!ended) throw CheckpointError("manifest has no end marker");
  std::size_t expected = 0;
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    if (pending[i].offset != expected) throw CheckpointError("non-contiguous block for " + ckpt.tensors[i].name);
    std::vector<std::uint32_t> raw(pending[i].bytes / sizeof(float));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pending[i].bytes));
    if (!in) throw CheckpointError("truncated data for " + ckpt.tensors[i].name);
    auto& data = ckpt.tensors[i].data;
    data.resize(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j) {
      const std::uint32_t bits = detail::to_little_endian(raw[j]);
      std::memcpy(&data[j], &bits, sizeof bits);
    }
    expected += pending[i].bytes;
  }
  return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path);
  write_checkpoint(out, ckpt);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  return read_checkpoint(in);
}

}  // namespace logcad
