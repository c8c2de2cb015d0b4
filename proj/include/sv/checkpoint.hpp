#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "sv/error.hpp"
#include "sv/tensor.hpp"

namespace sv::nn {

struct BadCheckpoint : Error {
  using Error::Error;
};

struct CheckpointEntry {
  std::string name;
  Tensor data;
};

// Named-tensor container backing the "SVAE" model file: magic, version u32,
// entry count u32, then per entry a name (u32 length + bytes), a shape
// (u32 rank + u32 dims) and the f64 payload, all little-endian.
struct Checkpoint {
  std::vector<CheckpointEntry> entries;

  const Tensor* find(std::string_view name) const;
  const Tensor& require(std::string_view name) const;  // throws BadCheckpoint if absent
  void add(std::string name, Tensor data);
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sv::nn
