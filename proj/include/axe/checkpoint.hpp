#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "axe/tensor.hpp"

namespace axe {

// Named-tensor bundle with a bit-exact binary round trip ("AXE1" format,
// little-endian; see docs/formats.md).
struct Checkpoint {
  struct Entry {
    std::string name;
    Array<float> value;
  };
  std::vector<Entry> tensors;

  void add(std::string name, Array<float> value) { tensors.push_back({std::move(name), std::move(value)}); }

  const Array<float>* find(const std::string& name) const {
    for (const auto& e : tensors)
      if (e.name == name) return &e.value;
    return nullptr;
  }

  bool has(const std::string& name) const { return find(name) != nullptr; }
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace axe
