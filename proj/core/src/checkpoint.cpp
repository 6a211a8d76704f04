#include "maf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace maf {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

uint64_t to_le(uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return __builtin_bswap64(v);
}

void put_u64(std::ofstream& f, uint64_t v) {
  const uint64_t le = to_le(v);
  f.write(reinterpret_cast<const char*>(&le), 8);
}

void put_f64(std::ofstream& f, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(f, bits);
}

bool get_u64(std::ifstream& f, uint64_t& v) {
  uint64_t le;
  if (!f.read(reinterpret_cast<char*>(&le), 8)) return false;
  v = to_le(le);
  return true;
}

double get_f64_or_throw(std::ifstream& f, const std::string& path) {
  uint64_t bits;
  if (!get_u64(f, bits)) throw std::runtime_error("checkpoint: truncated values in " + path);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path,
                      const std::map<std::string, Tensor>& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  f.write(kCheckpointMagic, 8);
  for (const auto& [name, t] : tensors) {
    put_u64(f, name.size());
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(f, static_cast<uint64_t>(t.rank()));
    for (int d : t.shape) put_u64(f, static_cast<uint64_t>(d));
    for (double v : t.values) put_f64(f, v);
  }
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: " + path.string() + " has no MAFCKPT1 magic");
  }
  std::map<std::string, Tensor> out;
  uint64_t name_len;
  while (get_u64(f, name_len)) {
    if (name_len > 4096) throw std::runtime_error("checkpoint: implausible name length in " + path.string());
    std::string name(name_len, '\0');
    if (!f.read(name.data(), static_cast<std::streamsize>(name_len))) {
      throw std::runtime_error("checkpoint: truncated name in " + path.string());
    }
    uint64_t rank;
    if (!get_u64(f, rank) || rank > 8) {
      throw std::runtime_error("checkpoint: bad rank for '" + name + "' in " + path.string());
    }
    Shape shape;
    int64_t numel = 1;
    for (uint64_t i = 0; i < rank; ++i) {
      uint64_t d;
      if (!get_u64(f, d)) throw std::runtime_error("checkpoint: truncated dims in " + path.string());
      shape.push_back(static_cast<int>(d));
      numel *= static_cast<int64_t>(d);
    }
    Tensor t = Tensor::zeros(shape);
    for (int64_t i = 0; i < numel; ++i) t.values[static_cast<size_t>(i)] = get_f64_or_throw(f, path.string());
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace maf
