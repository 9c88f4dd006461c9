#pragma once

// Shared binary matrix format:
//   bytes 0..7   magic "VPROMMAT"
//   u32          rank (1 or 2)
//   u64 x rank   dimensions
//   f64 ...      payload, column-major
// All integers and floats little-endian.

#include "vprom/common.hpp"

#include <array>
#include <filesystem>
#include <iosfwd>

namespace vprom::io {

inline constexpr std::array<char, 8> kMatrixMagic = {'V', 'P', 'R', 'O', 'M', 'M', 'A', 'T'};

void write_matrix(std::ostream& os, const Matrix& m);
void write_vector(std::ostream& os, const Vector& v);
Matrix read_matrix(std::istream& is);
Vector read_vector(std::istream& is);

void save_matrix(const std::filesystem::path& path, const Matrix& m);
void save_vector(const std::filesystem::path& path, const Vector& v);
Matrix load_matrix(const std::filesystem::path& path);
Vector load_vector(const std::filesystem::path& path);

}  // namespace vprom::io
