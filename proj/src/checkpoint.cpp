#include "axe/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace axe {

namespace {

void put_u32(std::ostream& os, std::uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                        static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  check(is.good(), "checkpoint: truncated while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check(os.good(), "checkpoint: cannot open for writing: " + path);
  os.write("AXE1", 4);
  put_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& e : ckpt.tensors) {
    put_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(os, static_cast<std::uint32_t>(e.value.rank()));
    for (int d : e.value.shape) put_u32(os, static_cast<std::uint32_t>(d));
    os.put(0);  // dtype tag: f32
    static_assert(sizeof(float) == 4);
    os.write(reinterpret_cast<const char*>(e.value.data()),
             static_cast<std::streamsize>(e.value.numel() * 4));
  }
  check(os.good(), "checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  check(is.good() && std::memcmp(magic, "AXE1", 4) == 0, "checkpoint: bad magic in " + path);
  const std::uint32_t count = get_u32(is, "tensor count");
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    check(is.good(), "checkpoint: truncated name in " + path);
    const std::uint32_t rank = get_u32(is, "rank");
    check(rank <= 8, "checkpoint: implausible rank in " + path);
    Shape shape(rank);
    std::int64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(get_u32(is, "extent"));
      check(shape[d] > 0, "checkpoint: nonpositive extent in " + path);
      n *= shape[d];
    }
    const int dtype = is.get();
    check(dtype == 0, "checkpoint: unsupported dtype tag in " + path);
    Array<float> value(shape);
    is.read(reinterpret_cast<char*>(value.data()), n * 4);
    check(is.good(), "checkpoint: truncated tensor payload for '" + name + "' in " + path);
    ckpt.add(std::move(name), std::move(value));
  }
  return ckpt;
}

}  // namespace axe
