#include <cstring>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "fedsample/linalg/serialize.hpp"
#include "oracle.hpp"

namespace {

using fedsample::linalg::SquareMatrix;
using fedsample::linalg::Vector;
namespace io = fedsample::io;

TEST(Spdm, MatrixRoundTripIsBitExact) {
  oracle::Gen gen(1);
  SquareMatrix m = gen.spd(7);
  m(2, 3) = std::numeric_limits<double>::denorm_min();
  m(4, 1) = -0.0;
  std::stringstream ss;
  io::write_matrix(ss, m);
  EXPECT_EQ(ss.str().size(), 4u + 8u + 49u * 8u);
  const SquareMatrix back = io::read_matrix(ss);
  EXPECT_EQ(std::memcmp(back.entries().data(), m.entries().data(), 49 * sizeof(double)), 0);
}

TEST(Spdm, LayoutIsLittleEndianRowMajor) {
  std::stringstream ss;
  io::write_matrix(ss, SquareMatrix::from_rows({{1, 2}, {3, 4}}));
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "SPDM");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 2u);
  EXPECT_EQ(bytes[5], 0);
  double second;
  std::memcpy(&second, bytes.data() + 12 + 8, 8);
  EXPECT_EQ(second, 2.0);
}

TEST(Spdm, VectorRoundTrip) {
  const Vector v{1.5, -2.25, 1e-300};
  std::stringstream ss;
  io::write_vector(ss, v);
  EXPECT_EQ(io::read_vector(ss), v);
}

TEST(Spdm, Errors) {
  std::stringstream bad("SPDX\x02\0\0\0\x02\0\0\0");
  EXPECT_THROW(io::read_matrix(bad), io::FormatError);

  std::stringstream ss;
  io::write_matrix(ss, SquareMatrix::identity(3));
  std::string cut = ss.str();
  cut.resize(cut.size() - 5);
  std::stringstream truncated(cut);
  EXPECT_THROW(io::read_matrix(truncated), io::TruncatedFile);

  std::stringstream empty;
  EXPECT_THROW(io::read_matrix(empty), io::TruncatedFile);

  std::stringstream vec;
  io::write_vector(vec, Vector{1, 2});
  EXPECT_THROW(io::read_matrix(vec), io::FormatError);
}

TEST(Csv, RoundTripAtFullPrecision) {
  oracle::Gen gen(2);
  const SquareMatrix m = gen.spd(5);
  std::stringstream ss;
  io::write_matrix_csv(ss, m);
  EXPECT_EQ(io::read_matrix_csv(ss), m);
}

TEST(Csv, Errors) {
  std::stringstream ragged("1,2\n3\n");
  EXPECT_THROW(io::read_matrix_csv(ragged), io::FormatError);
  std::stringstream words("1,x\n3,4\n");
  EXPECT_THROW(io::read_matrix_csv(words), io::FormatError);
  std::stringstream rect("1,2,3\n4,5,6\n");
  EXPECT_THROW(io::read_matrix_csv(rect), io::FormatError);
}

}  // namespace
