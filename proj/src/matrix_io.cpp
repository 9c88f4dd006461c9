#include "vprom/matrix_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

namespace vprom {

std::uint64_t hash_matrix(const Matrix& m) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    const std::int64_t rows = m.rows();
    const std::int64_t cols = m.cols();
    mix(&rows, sizeof rows);
    mix(&cols, sizeof cols);
    mix(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    return h;
}

std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

namespace io {
namespace {

template <typename T>
void put_le(std::ostream& os, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
    unsigned char bytes[sizeof(T)];
    is.read(reinterpret_cast<char*>(bytes), sizeof(T));
    if (!is) throw Error("matrix stream truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

void write_header(std::ostream& os, const std::vector<std::uint64_t>& dims) {
    os.write(kMatrixMagic.data(), kMatrixMagic.size());
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) put_le<std::uint64_t>(os, d);
}

std::vector<std::uint64_t> read_header(std::istream& is) {
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMatrixMagic) throw Error("bad matrix magic");
    const auto rank = get_le<std::uint32_t>(is);
    if (rank < 1 || rank > 2) throw Error("unsupported matrix rank " + std::to_string(rank));
    std::vector<std::uint64_t> dims(rank);
    for (auto& d : dims) d = get_le<std::uint64_t>(is);
    return dims;
}

void write_payload(std::ostream& os, const double* data, Index n) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    } else {
        for (Index i = 0; i < n; ++i) put_le<double>(os, data[i]);
    }
}

void read_payload(std::istream& is, double* data, Index n) {
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
        if (!is) throw Error("matrix stream truncated");
    } else {
        for (Index i = 0; i < n; ++i) data[i] = get_le<double>(is);
    }
}

}  // namespace

void write_matrix(std::ostream& os, const Matrix& m) {
    write_header(os, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())});
    write_payload(os, m.data(), m.size());
}

void write_vector(std::ostream& os, const Vector& v) {
    write_header(os, {static_cast<std::uint64_t>(v.size())});
    write_payload(os, v.data(), v.size());
}

Matrix read_matrix(std::istream& is) {
    const auto dims = read_header(is);
    const auto rows = static_cast<Index>(dims[0]);
    const auto cols = dims.size() == 2 ? static_cast<Index>(dims[1]) : Index{1};
    Matrix m(rows, cols);
    read_payload(is, m.data(), m.size());
    return m;
}

Vector read_vector(std::istream& is) {
    Matrix m = read_matrix(is);
    if (m.cols() != 1) throw DimensionError("expected a rank-1 matrix file");
    return m.col(0);
}

void save_matrix(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    write_matrix(os, m);
}

void save_vector(const std::filesystem::path& path, const Vector& v) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    write_vector(os, v);
}

Matrix load_matrix(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read " + path.string());
    return read_matrix(is);
}

Vector load_vector(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read " + path.string());
    return read_vector(is);
}

}  // namespace io
}  // namespace vprom
