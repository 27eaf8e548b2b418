#include "kinmo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace kinmo {
namespace {

constexpr char kMagic[6] = {'K', 'I', 'N', 'M', 'O', '1'};
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T take(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CheckpointError("truncated " + what);
  return v;
}

std::string take_string(std::istream& in, const std::string& what) {
  const auto n = take<std::uint32_t>(in, what);
  if (n > (1u << 26)) throw CheckpointError("implausible length for " + what);
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw CheckpointError("truncated " + what);
  return s;
}

}  // namespace

void Checkpoint::add(const std::string& name, const nn::Matrix& value) {
  if (contains(name)) throw CheckpointError("duplicate blob " + name);
  blobs.emplace_back(name, value);
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& [n, m] : blobs)
    if (n == name) return true;
  return false;
}

const nn::Matrix& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, m] : blobs)
    if (n == name) return m;
  throw CheckpointError("checkpoint '" + component + "' has no blob " + name);
}

nn::Matrix to_stored_precision(const nn::Matrix& m) { return m.cast<float>().cast<double>(); }

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_string(out, ckpt.component);
  put<std::uint64_t>(out, ckpt.config.digest());
  put_string(out, ckpt.config.canonical());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const auto& [name, m] : ckpt.blobs) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put<float>(out, static_cast<float>(m(r, c)));
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(path.string() + " is not a kinmo checkpoint");
  Checkpoint ckpt;
  ckpt.component = take_string(in, "component tag");
  const auto digest = take<std::uint64_t>(in, "digest");
  ckpt.config = Config::parse(take_string(in, "config"), path.string() + " config");
  if (ckpt.config.digest() != digest)
    throw CheckpointError(path.string() + ": stored config does not match its digest");
  const auto count = take<std::uint32_t>(in, "blob count");
  for (std::uint32_t b = 0; b < count; ++b) {
    std::string name = take_string(in, "blob name");
    const auto rows = take<std::uint32_t>(in, name);
    const auto cols = take<std::uint32_t>(in, name);
    nn::Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = take<float>(in, name);
    ckpt.blobs.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& component,
                           const Config& expected) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.component != component)
    throw CheckpointError(path.string() + " holds a '" + ckpt.component + "' checkpoint, expected '" +
                          component + "'");
  if (!expected.entries().empty() && expected.digest() != ckpt.config.digest())
    throw CheckpointError(path.string() + " was trained under a different config (digest " +
                          std::to_string(ckpt.config.digest()) + " vs " +
                          std::to_string(expected.digest()) + ")");
  return ckpt;
}

}  // namespace kinmo
