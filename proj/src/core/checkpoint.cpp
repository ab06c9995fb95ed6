#include "core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "core/error.hpp"
#include "core/hash.hpp"

namespace ap {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) raise(ErrorKind::Io, "checkpoint: truncated file");
  return v;
}

constexpr char kMagic[4] = {'A', 'P', 'C', 'K'};

}  // namespace

std::string Checkpoint::config_hash() const { return hex64(fnv1a64(config_json)); }

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(ErrorKind::Io, "checkpoint: cannot open for write: " + path);
  os.write(kMagic, 4);
  put<uint32_t>(os, ck.version);
  put<uint32_t>(os, static_cast<uint32_t>(ck.config_json.size()));
  os.write(ck.config_json.data(), static_cast<std::streamsize>(ck.config_json.size()));
  put<uint64_t>(os, ck.entries.size());
  for (const auto& [name, t] : ck.entries) {
    put<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
    for (size_t d = 0; d < t.ndim(); ++d) put<uint64_t>(os, t.dim(d));
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) raise(ErrorKind::Io, "checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorKind::Io, "checkpoint: cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    raise(ErrorKind::Schema, "checkpoint: bad magic in " + path);
  Checkpoint ck;
  ck.version = get<uint32_t>(is);
  if (ck.version != 1)
    raise(ErrorKind::Schema, "checkpoint: unsupported version " + std::to_string(ck.version));
  uint32_t cfg_len = get<uint32_t>(is);
  ck.config_json.resize(cfg_len);
  is.read(ck.config_json.data(), cfg_len);
  uint64_t count = get<uint64_t>(is);
  for (uint64_t e = 0; e < count; ++e) {
    uint32_t name_len = get<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    uint32_t ndim = get<uint32_t>(is);
    Shape shape(ndim);
    size_t total = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      shape[d] = static_cast<size_t>(get<uint64_t>(is));
      total *= shape[d];
    }
    std::vector<double> vals(total);
    is.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    if (!is) raise(ErrorKind::Io, "checkpoint: truncated tensor data in " + path);
    ck.entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(vals)));
  }
  return ck;
}

}  // namespace ap
