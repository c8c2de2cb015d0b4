#include "sv/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace sv::nn {

namespace {

constexpr char kMagic[4] = {'S', 'V', 'A', 'E'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw BadCheckpoint(std::string("checkpoint truncated reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& is, const char* what) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw BadCheckpoint(std::string("checkpoint truncated reading ") + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace

const Tensor* Checkpoint::find(std::string_view name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e.data;
  return nullptr;
}

const Tensor& Checkpoint::require(std::string_view name) const {
  if (const Tensor* t = find(name)) return *t;
  throw BadCheckpoint("checkpoint is missing tensor \"" + std::string(name) + "\"");
}

void Checkpoint::add(std::string name, Tensor data) {
  entries.push_back({std::move(name), std::move(data)});
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    put_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    const auto& shape = e.data.shape();
    put_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put_u32(os, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < e.data.size(); ++i) put_f64(os, e.data[i]);
  }
  os.flush();
  if (!os) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw BadCheckpoint(path + " is not a model checkpoint (bad magic)");
  const std::uint32_t version = get_u32(is, "version");
  if (version != kVersion)
    throw BadCheckpoint(path + ": unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = get_u32(is, "entry count");
  Checkpoint ckpt;
  ckpt.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(is, "name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw BadCheckpoint("checkpoint truncated reading name");
    const std::uint32_t rank = get_u32(is, "shape rank");
    if (rank == 0 || rank > 4)
      throw BadCheckpoint("checkpoint tensor \"" + name + "\" has rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = get_u32(is, "shape dim");
    Tensor t(shape);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = get_f64(is, "tensor data");
    ckpt.entries.push_back({std::move(name), std::move(t)});
  }
  return ckpt;
}

}  // namespace sv::nn
