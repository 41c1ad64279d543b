#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tensor.hpp"

namespace muze::nn {

// Binary container for named float32 tensors plus a JSON metadata blob.
// Layout (all integers little-endian uint32):
//   magic "MUZETNSR" | version | kind_len, kind | meta_len, meta JSON
//   | tensor_count | per tensor: name_len, name, rows, cols, rows*cols f32
// Round-trips bit-exactly.
struct TensorArchive {
  std::string kind;
  nlohmann::json meta;
  std::vector<std::pair<std::string, Matrix>> tensors;

  void add(const std::string& name, const Matrix& m) { tensors.emplace_back(name, m); }
  const Matrix& get(const std::string& name) const;
  bool has(const std::string& name) const;

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);
};

}  // namespace muze::nn
