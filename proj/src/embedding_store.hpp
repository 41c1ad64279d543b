#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace muze::enc {

// File-backed cache of embedding vectors. Layout: a fixed header (magic
// "MUZEEMB1", uint32 version, uint32 dim) followed by append-only records of
// (uint32 key_length, key bytes, dim float32 little-endian values). Lookups
// return bit-identical vectors. Reads may be shared; writes follow a
// single-writer contract and are not internally synchronized.
class EmbeddingStore {
public:
  // Opens or creates the backing file; an existing file must match dim.
  EmbeddingStore(std::filesystem::path path, int dim);

  int dim() const { return dim_; }
  size_t size() const { return entries_.size(); }
  const std::filesystem::path& path() const { return path_; }

  std::optional<std::vector<float>> get(const std::string& key) const;
  bool contains(const std::string& key) const { return entries_.count(key) != 0; }

  // Appends to the backing file; re-putting an existing key is a no-op.
  void put(const std::string& key, const std::vector<float>& vec);

private:
  void load_existing();
  void append_record(const std::string& key, const std::vector<float>& vec);

  std::filesystem::path path_;
  int dim_;
  std::unordered_map<std::string, std::vector<float>> entries_;
};

}  // namespace muze::enc
