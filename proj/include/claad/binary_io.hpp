#pragma once

// CLAD matrix files: 16-byte header (magic "CLAD", u32 rows, u32 cols,
// u32 sample rate in millihertz; all little-endian) followed by a row-major
// little-endian float32 payload.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include <Eigen/Dense>

namespace claad {

using MatrixXfRowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MatrixFile {
  MatrixXfRowMajor data;
  std::uint32_t sample_rate_mhz = 0;

  double sample_rate_hz() const { return static_cast<double>(sample_rate_mhz) / 1000.0; }
};

void write_matrix_file(const std::filesystem::path& path, const Eigen::Ref<const Eigen::MatrixXd>& data,
                       double fs);
MatrixFile read_matrix_file(const std::filesystem::path& path);

// Little-endian primitives shared with the checkpoint container.
void write_u32(std::ostream& out, std::uint32_t v);
std::uint32_t read_u32(std::istream& in, const std::string& context);
void write_f32_block(std::ostream& out, const float* data, std::size_t n);
void read_f32_block(std::istream& in, float* data, std::size_t n, const std::string& context);

}  // namespace claad
