#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace ap {

// Weight checkpoint container. Binary layout (all integers little-endian):
//   magic "APCK", u32 format version,
//   u32 config-json length, config json bytes (model configuration; its fnv1a-64
//   hash is the config hash recorded in logs/reports),
//   u64 entry count, then per entry:
//     u32 name length, name bytes, u32 ndim, u64 dims[ndim], f64 values[...] (LE).
struct Checkpoint {
  uint32_t version = 1;
  std::string config_json;
  // insertion order preserved so writes are deterministic
  std::vector<std::pair<std::string, Tensor>> entries;

  std::string config_hash() const;
  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ap
