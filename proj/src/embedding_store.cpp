#include "embedding_store.hpp"

#include <cstring>
#include <fstream>

#include "errors.hpp"

namespace muze::enc {

namespace {

constexpr char kMagic[8] = {'M', 'U', 'Z', 'E', 'E', 'M', 'B', '1'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool read_u32(std::istream& in, uint32_t& v) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) return false;
  v = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
      (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
  return true;
}

}  // namespace

EmbeddingStore::EmbeddingStore(std::filesystem::path path, int dim)
    : path_(std::move(path)), dim_(dim) {
  if (dim_ < 1) throw Error("embedding store dim must be >= 1");
  if (std::filesystem::exists(path_) && std::filesystem::file_size(path_) > 0) {
    load_existing();
  } else {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create embedding store: " + path_.string());
    out.write(kMagic, 8);
    write_u32(out, kVersion);
    write_u32(out, static_cast<uint32_t>(dim_));
  }
}

void EmbeddingStore::load_existing() {
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw IoError("cannot open embedding store: " + path_.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError("not an embedding store: " + path_.string());
  }
  uint32_t version = 0, file_dim = 0;
  if (!read_u32(in, version) || !read_u32(in, file_dim) || version != kVersion) {
    throw IoError("unsupported embedding store header: " + path_.string());
  }
  if (static_cast<int>(file_dim) != dim_) {
    throw IoError("embedding store dim " + std::to_string(file_dim) + " does not match requested " +
                  std::to_string(dim_));
  }
  uint32_t key_len = 0;
  while (read_u32(in, key_len)) {
    std::string key(key_len, '\0');
    in.read(key.data(), key_len);
    std::vector<float> vec(static_cast<size_t>(dim_));
    for (float& x : vec) {
      uint32_t bits;
      if (!read_u32(in, bits)) throw IoError("truncated embedding store: " + path_.string());
      std::memcpy(&x, &bits, 4);
    }
    if (!in) throw IoError("truncated embedding store: " + path_.string());
    entries_[std::move(key)] = std::move(vec);  // append-only: last record wins
  }
}

std::optional<std::vector<float>> EmbeddingStore::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingStore::put(const std::string& key, const std::vector<float>& vec) {
  if (static_cast<int>(vec.size()) != dim_) {
    throw ShapeError("embedding store expects dim " + std::to_string(dim_) + ", got " +
                     std::to_string(vec.size()));
  }
  if (entries_.count(key)) return;
  append_record(key, vec);
  entries_[key] = vec;
}

void EmbeddingStore::append_record(const std::string& key, const std::vector<float>& vec) {
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot append to embedding store: " + path_.string());
  write_u32(out, static_cast<uint32_t>(key.size()));
  out.write(key.data(), static_cast<std::streamsize>(key.size()));
  for (float x : vec) {
    uint32_t bits;
    std::memcpy(&bits, &x, 4);
    write_u32(out, bits);
  }
  if (!out) throw IoError("append failed: " + path_.string());
}

}  // namespace muze::enc
