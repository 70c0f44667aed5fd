// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "patternid/errors.hpp"

namespace patternid {

/// A shaped float tensor with a name, as stored in the container.
struct NamedTensor {
  std::vector<std::uint64_t> shape;
  std::vector<float> values;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : shape) n *= d;
    return n;
  }
};

/// Named-tensor binary container.
///
/// Byte layout (all integers little-endian):
///   magic     8 bytes: 4E 54 42 31 0D 0A 1A 0A  ("NTB1" + text-mode guard)
///   count     uint32          number of tensors
///   per tensor:
///     name_len  uint32        UTF-8 name byte count
///     name      name_len bytes
///     ndim      uint32
///     dims      ndim x uint64
///     data      prod(dims) x float32 (IEEE-754, little-endian)
///
/// Tensors are written in name order, so re-serialization is byte-stable.
class WeightStore {
 public:
  static constexpr unsigned char kMagic[8] = {0x4E, 0x54, 0x42, 0x31,
                                              0x0D, 0x0A, 0x1A, 0x0A};

  bool contains(const std::string& name) const {
    return tensors_.count(name) != 0;
  }

  const NamedTensor& get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end())
      throw InvalidArgument("missing tensor: " + name);
    return it->second;
  }

  void put(const std::string& name, NamedTensor tensor) {
    if (tensor.element_count() != tensor.values.size())
      throw InvalidArgument("tensor shape/value mismatch: " + name);
    tensors_[name] = std::move(tensor);
  }

  void put(const std::string& name, std::vector<std::uint64_t> shape,
           std::vector<float> values) {
    put(name, NamedTensor{std::move(shape), std::move(values)});
  }

  const std::map<std::string, NamedTensor>& tensors() const {
    return tensors_;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open file for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(kMagic), 8);
    write_u32(out, static_cast<std::uint32_t>(tensors_.size()));
    for (const auto& [name, tensor] : tensors_) {
      write_u32(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(out, static_cast<std::uint32_t>(tensor.shape.size()));
      for (std::uint64_t d : tensor.shape) write_u64(out, d);
      out.write(reinterpret_cast<const char*>(tensor.values.data()),
                static_cast<std::streamsize>(tensor.values.size() *
                                             sizeof(float)));
    }
    if (!out) throw IoError("write failure: " + path.string());
  }

  static WeightStore load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open tensor container: " + path.string());
    unsigned char magic[8];
    in.read(reinterpret_cast<char*>(magic), 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
      throw FormatError("not a named-tensor container: " + path.string());

    WeightStore store;
    const std::uint32_t count = read_u32(in, path);
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint32_t name_len = read_u32(in, path);
      if (name_len > (1u << 20))
        throw ParseError("implausible tensor name length: " + path.string());
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      const std::uint32_t ndim = read_u32(in, path);
      if (ndim > 8)
        throw ParseError("implausible tensor rank: " + path.string());
      NamedTensor tensor;
      tensor.shape.resize(ndim);
      for (std::uint32_t d = 0; d < ndim; ++d)
        tensor.shape[d] = read_u64(in, path);
      const std::uint64_t n = tensor.element_count();
      if (n > (1ULL << 32))
        throw ParseError("implausible tensor size: " + path.string());
      tensor.values.resize(static_cast<std::size_t>(n));
      in.read(reinterpret_cast<char*>(tensor.values.data()),
              static_cast<std::streamsize>(n * sizeof(float)));
      if (!in) throw ParseError("truncated tensor container: " + path.string());
      store.tensors_[name] = std::move(tensor);
    }
    return store;
  }

 private:
  static void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
  }
  static void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
  static std::uint32_t read_u32(std::istream& in,
                                const std::filesystem::path& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw ParseError("truncated tensor container: " + path.string());
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
    return v;
  }
  static std::uint64_t read_u64(std::istream& in,
                                const std::filesystem::path& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw ParseError("truncated tensor container: " + path.string());
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
    return v;
  }

  std::map<std::string, NamedTensor> tensors_;
};

}  // namespace patternid
