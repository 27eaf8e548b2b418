#include "kinmo/motion_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <regex>
#include <string>
#include <vector>

#include "kinmo/error.hpp"

namespace kinmo {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <class T>
T read_pod(const std::vector<char>& bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

template <class T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void write_kmot(const std::filesystem::path& path, const Eigen::MatrixXd& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write("KMOT", 4);
  write_pod<std::uint32_t>(out, kKmotVersion);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(data.rows()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(data.cols()));
  for (Eigen::Index r = 0; r < data.rows(); ++r)
    for (Eigen::Index c = 0; c < data.cols(); ++c)
      write_pod<float>(out, static_cast<float>(data(r, c)));
}

Eigen::MatrixXd read_kmot(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "KMOT", 4) != 0)
    throw FormatError(path.string() + " is not a KMOT file");
  const auto version = read_pod<std::uint32_t>(bytes, 4);
  if (version != kKmotVersion)
    throw FormatError("unsupported KMOT version " + std::to_string(version));
  const auto rows = read_pod<std::uint32_t>(bytes, 8);
  const auto cols = read_pod<std::uint32_t>(bytes, 12);
  const std::size_t expected = 16 + std::size_t{rows} * cols * sizeof(float);
  if (bytes.size() != expected)
    throw FormatError(path.string() + ": payload size does not match header");
  Eigen::MatrixXd m(rows, cols);
  std::size_t off = 16;
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c, off += sizeof(float))
      m(r, c) = read_pod<float>(bytes, off);
  return m;
}

void save_motion(const std::filesystem::path& path, const MotionSequence& motion) {
  write_kmot(path, motion.features());
}

MotionSequence load_motion(const std::filesystem::path& path) {
  return MotionSequence(read_kmot(path));
}

Eigen::MatrixXd read_npy(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() < 10 || std::memcmp(bytes.data(), "\x93NUMPY", 6) != 0)
    throw FormatError(path.string() + " is not a .npy file");
  const int major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0;
  std::size_t header_start = 0;
  if (major == 1) {
    header_len = read_pod<std::uint16_t>(bytes, 8);
    header_start = 10;
  } else {
    header_len = read_pod<std::uint32_t>(bytes, 8);
    header_start = 12;
  }
  if (bytes.size() < header_start + header_len) throw FormatError(path.string() + ": truncated header");
  const std::string header(bytes.data() + header_start, header_len);
  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr':\s*'([<|=])([fF])(\d))")))
    throw FormatError(path.string() + ": unsupported dtype");
  const int width = std::stoi(m[3]);
  if (width != 4 && width != 8) throw FormatError(path.string() + ": unsupported float width");
  if (std::regex_search(header, std::regex(R"('fortran_order':\s*True)")))
    throw FormatError(path.string() + ": Fortran-ordered arrays are not supported");
  if (!std::regex_search(header, m, std::regex(R"('shape':\s*\((\d+),\s*(\d+)\s*,?\))")))
    throw FormatError(path.string() + ": expected a 2-D array");
  const long rows = std::stol(m[1]);
  const long cols = std::stol(m[2]);
  const std::size_t data_start = header_start + header_len;
  if (bytes.size() != data_start + static_cast<std::size_t>(rows * cols * width))
    throw FormatError(path.string() + ": payload size does not match shape");
  Eigen::MatrixXd out(rows, cols);
  std::size_t off = data_start;
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c, off += width)
      out(r, c) = width == 4 ? read_pod<float>(bytes, off) : read_pod<double>(bytes, off);
  return out;
}

void write_npy(const std::filesystem::path& path, const Eigen::MatrixXd& data) {
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" +
                       std::to_string(data.rows()) + ", " + std::to_string(data.cols()) + "), }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write("\x93NUMPY\x01\x00", 8);
  write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(header.size()));
  out << header;
  for (Eigen::Index r = 0; r < data.rows(); ++r)
    for (Eigen::Index c = 0; c < data.cols(); ++c) write_pod<float>(out, static_cast<float>(data(r, c)));
}

}  // namespace kinmo
