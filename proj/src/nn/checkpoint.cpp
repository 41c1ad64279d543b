#include "checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "../errors.hpp"

namespace muze::nn {

namespace {

constexpr char kMagic[8] = {'M', 'U', 'Z', 'E', 'T', 'N', 'S', 'R'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("truncated tensor archive");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& in) {
  const uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw IoError("truncated tensor archive");
  return s;
}

void write_floats(std::ostream& out, const std::vector<float>& v) {
  static_assert(sizeof(float) == 4);
  for (float x : v) {
    uint32_t bits;
    std::memcpy(&bits, &x, 4);
    write_u32(out, bits);
  }
}

void read_floats(std::istream& in, std::vector<float>& v) {
  for (float& x : v) {
    const uint32_t bits = read_u32(in);
    std::memcpy(&x, &bits, 4);
  }
}

}  // namespace

const Matrix& TensorArchive::get(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw IoError("tensor archive is missing tensor '" + name + "'");
}

bool TensorArchive::has(const std::string& name) const {
  for (const auto& [n, _] : tensors) {
    if (n == name) return true;
  }
  return false;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write tensor archive: " + path.string());
  out.write(kMagic, 8);
  write_u32(out, kVersion);
  write_str(out, kind);
  write_str(out, meta.dump());
  write_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    write_str(out, name);
    write_u32(out, static_cast<uint32_t>(m.rows));
    write_u32(out, static_cast<uint32_t>(m.cols));
    write_floats(out, m.d);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor archive: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw IoError("not a tensor archive: " + path.string());
  }
  const uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw IoError("unsupported tensor archive version " + std::to_string(version));
  }
  TensorArchive ar;
  ar.kind = read_str(in);
  const std::string meta_str = read_str(in);
  try {
    ar.meta = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt archive metadata: ") + e.what());
  }
  const uint32_t count = read_u32(in);
  ar.tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = read_str(in);
    const int rows = static_cast<int>(read_u32(in));
    const int cols = static_cast<int>(read_u32(in));
    Matrix m(rows, cols);
    read_floats(in, m.d);
    if (!in) throw IoError("truncated tensor archive: " + path.string());
    ar.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ar;
}

}  // namespace muze::nn
