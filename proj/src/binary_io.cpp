#include "claad/binary_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "claad/error.hpp"

namespace claad {

static_assert(std::endian::native == std::endian::little, "CLAD I/O assumes a little-endian host");

namespace {
constexpr std::array<char, 4> kMagic{'C', 'L', 'A', 'D'};
}

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in, const std::string& context) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CorruptFile(context + ": truncated header");
  return v;
}

void write_f32_block(std::ostream& out, const float* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
}

void read_f32_block(std::istream& in, float* data, std::size_t n, const std::string& context) {
  if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)))) {
    throw CorruptFile(context + ": payload shorter than declared shape");
  }
}

void write_matrix_file(const std::filesystem::path& path, const Eigen::Ref<const Eigen::MatrixXd>& data,
                       double fs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw NotFound("cannot open '" + path.string() + "' for writing");
  out.write(kMagic.data(), kMagic.size());
  write_u32(out, static_cast<std::uint32_t>(data.rows()));
  write_u32(out, static_cast<std::uint32_t>(data.cols()));
  write_u32(out, static_cast<std::uint32_t>(std::llround(fs * 1000.0)));
  const MatrixXfRowMajor payload = data.cast<float>();
  write_f32_block(out, payload.data(), static_cast<std::size_t>(payload.size()));
  if (!out) throw NotFound("failed writing '" + path.string() + "'");
}

MatrixFile read_matrix_file(const std::filesystem::path& path) {
  const std::string ctx = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("data file '" + ctx + "' not found");

  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw CorruptFile(ctx + ": bad magic");
  const std::uint32_t rows = read_u32(in, ctx);
  const std::uint32_t cols = read_u32(in, ctx);
  MatrixFile f;
  f.sample_rate_mhz = read_u32(in, ctx);

  in.seekg(0, std::ios::end);
  const auto total = static_cast<std::uint64_t>(in.tellg());
  const std::uint64_t expected = 16 + std::uint64_t{rows} * cols * sizeof(float);
  if (total != expected) {
    throw CorruptFile(ctx + ": header declares " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " float32 values (" + std::to_string(expected) + " bytes) but file has " +
                      std::to_string(total) + " bytes");
  }
  in.seekg(16);
  f.data.resize(rows, cols);
  read_f32_block(in, f.data.data(), static_cast<std::size_t>(f.data.size()), ctx);
  return f;
}

}  // namespace claad
