#pragma once

// Fixture serialization for matrices and vectors.
//
// Binary layout (little-endian):
//   char[4] "SPDM" | u32 rows | u32 cols | rows*cols float64, row-major
// A vector is stored as a 1 x n matrix. The CSV form is one row per line,
// values printed with 17 significant digits so they parse back exactly.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsample/linalg/matrix.hpp"

namespace fedsample::io {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TruncatedFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace le {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
T byteswap_if_needed(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return v;
  }
}

template <class T>
void write(std::ostream& os, T v) {
  v = byteswap_if_needed(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (is.gcount() != static_cast<std::streamsize>(sizeof v)) {
    throw TruncatedFile(std::string("truncated input while reading ") + what);
  }
  return byteswap_if_needed(v);
}

}  // namespace le

/// Dense row-major block as stored on disk.
struct DenseBlock {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<double> values;
};

inline void write_spdm(std::ostream& os, std::uint32_t rows, std::uint32_t cols,
                       std::span<const double> values) {
  if (values.size() != std::size_t{rows} * cols) {
    throw linalg::DimensionMismatch("write_spdm: value count does not match rows*cols");
  }
  os.write("SPDM", 4);
  le::write<std::uint32_t>(os, rows);
  le::write<std::uint32_t>(os, cols);
  for (double v : values) le::write<double>(os, v);
  if (!os) throw std::runtime_error("write_spdm: stream error");
}

inline DenseBlock read_spdm(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (is.gcount() != 4) throw TruncatedFile("read_spdm: missing magic");
  if (std::string(magic, 4) != "SPDM") throw FormatError("read_spdm: bad magic");
  DenseBlock b;
  b.rows = le::read<std::uint32_t>(is, "rows");
  b.cols = le::read<std::uint32_t>(is, "cols");
  const std::size_t count = std::size_t{b.rows} * b.cols;
  b.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) b.values[i] = le::read<double>(is, "payload");
  return b;
}

inline void write_matrix(std::ostream& os, const linalg::SquareMatrix& m) {
  const auto d = static_cast<std::uint32_t>(m.dim());
  write_spdm(os, d, d, m.entries());
}

inline linalg::SquareMatrix read_matrix(std::istream& is) {
  DenseBlock b = read_spdm(is);
  if (b.rows != b.cols || b.rows == 0) throw FormatError("read_matrix: block is not a square matrix");
  return linalg::SquareMatrix(b.rows, std::move(b.values));
}

inline void write_vector(std::ostream& os, std::span<const double> v) {
  write_spdm(os, 1, static_cast<std::uint32_t>(v.size()), v);
}

inline linalg::Vector read_vector(std::istream& is) {
  DenseBlock b = read_spdm(is);
  if (b.rows != 1) throw FormatError("read_vector: expected a 1 x n block");
  return std::move(b.values);
}

inline void write_csv(std::ostream& os, std::size_t rows, std::size_t cols,
                      std::span<const double> values) {
  const auto old_precision = os.precision(17);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (j) os << ',';
      os << values[i * cols + j];
    }
    os << '\n';
  }
  os.precision(old_precision);
}

inline void write_matrix_csv(std::ostream& os, const linalg::SquareMatrix& m) {
  write_csv(os, m.dim(), m.dim(), m.entries());
}

inline linalg::SquareMatrix read_matrix_csv(std::istream& is) {
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError("read_matrix_csv: bad number '" + cell + "'");
      }
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols) throw FormatError("read_matrix_csv: ragged row " + std::to_string(rows));
    ++rows;
  }
  if (rows == 0 || rows != cols) throw FormatError("read_matrix_csv: not a square matrix");
  return linalg::SquareMatrix(rows, std::move(values));
}

}  // namespace fedsample::io
