// SPDX-License-Identifier: Apache-2.0
#include "mere/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "mere/errors.hpp"

namespace mere {

namespace {

constexpr char kMagic[8] = {'M', 'E', 'R', 'E', 'c', 'k', 'p', 't'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("checkpoint truncated");
  return v;
}

std::string get_string(std::istream& in, std::uint64_t limit = 1ULL << 30) {
  const auto n = get_u64(in);
  if (n > limit) throw DataError("checkpoint string length out of range");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint truncated");
  return s;
}

}  // namespace

const NamedTensor* CheckpointData::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof kMagic);
  put_string(out, data.version);
  put_string(out, data.meta.dump());
  put_u64(out, data.tensors.size());
  for (const auto& t : data.tensors) {
    if (shape_size(t.shape) != t.values.size()) {
      throw DataError("tensor " + t.name + " payload does not match shape " + shape_str(t.shape));
    }
    put_string(out, t.name);
    put_u64(out, t.shape.size());
    for (auto d : t.shape) put_u64(out, d);
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError("not a checkpoint file: " + path);
  }
  CheckpointData data;
  data.version = get_string(in);
  if (data.version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version '" + data.version + "'");
  }
  try {
    data.meta = nlohmann::json::parse(get_string(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const auto count = get_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = get_string(in, 4096);
    const auto rank = get_u64(in);
    if (rank == 0 || rank > 8) throw DataError("tensor " + t.name + " has invalid rank");
    for (std::uint64_t r = 0; r < rank; ++r) t.shape.push_back(get_u64(in));
    const std::size_t n = shape_size(t.shape);
    if (n == 0 || n > (1ULL << 32)) throw DataError("tensor " + t.name + " has invalid size");
    t.values.resize(n);
    if (!in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
      throw DataError("checkpoint truncated in tensor " + t.name);
    }
    data.tensors.push_back(std::move(t));
  }
  return data;
}

}  // namespace mere
