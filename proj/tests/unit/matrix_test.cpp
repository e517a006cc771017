#include <cmath>

#include "doctest.h"
#include "graphfl/matrix.hpp"
#include "graphfl/rng.hpp"

using namespace graphfl;

namespace {

DenseMatrix dense_product(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double acc = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += static_cast<long double>(a(i, k)) * b(k, j);
      out(i, j) = static_cast<double>(acc);
    }
  }
  return out;
}

double frobenius_rel(const DenseMatrix& a, const DenseMatrix& b) {
  double diff = 0, norm = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    diff += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    norm += b.data()[i] * b.data()[i];
  }
  return std::sqrt(diff / norm);
}

CsrMatrix random_sparse(std::size_t n, double density, Rng& rng) {
  std::vector<Triplet> t;
  for (std::uint32_t r = 0; r < n; ++r) {
    for (std::uint32_t c = 0; c < n; ++c) {
      if (rng.bernoulli(density)) t.push_back({r, c, rng.uniform(-1, 1)});
    }
  }
  return CsrMatrix::from_triplets(n, n, t);
}

DenseMatrix random_dense(std::size_t r, std::size_t c, Rng& rng) {
  DenseMatrix m(r, c);
  for (auto& x : m.data()) x = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("csr: triplets are sorted and duplicates summed") {
  const auto m = CsrMatrix::from_triplets(2, 3, {{1, 2, 1.0}, {0, 1, 2.0}, {1, 0, 3.0}, {1, 2, 0.5}});
  CHECK(m.nnz() == 3);
  CHECK(m.at(0, 1) == 2.0);
  CHECK(m.at(1, 0) == 3.0);
  CHECK(m.at(1, 2) == 1.5);
  CHECK(m.at(0, 0) == 0.0);
  const auto cols = m.row_cols(1);
  CHECK(cols.size() == 2);
  CHECK(cols[0] == 0);
  CHECK(cols[1] == 2);
}

TEST_CASE("csr: constructor rejects unsorted or out-of-range columns") {
  CHECK_THROWS_AS(CsrMatrix(1, 3, {0, 2}, {2, 1}, {1.0, 1.0}), ShapeError);
  CHECK_THROWS_AS(CsrMatrix(1, 3, {0, 1}, {3}, {1.0}), ShapeError);
  CHECK_THROWS_AS(CsrMatrix(1, 3, {0, 2}, {1, 1}, {1.0, 1.0}), ShapeError);
}

TEST_CASE("csr: dense round trip drops exact zeros") {
  DenseMatrix d(2, 2, std::vector<double>{0.0, 1.5, -2.0, 0.0});
  const auto s = CsrMatrix::from_dense(d);
  CHECK(s.nnz() == 2);
  CHECK(s.to_dense() == d);
}

TEST_CASE("spmm: identity leaves X unchanged") {
  Rng rng(1);
  const auto x = random_dense(5, 3, rng);
  CHECK(spmm(CsrMatrix::identity(5), x) == x);
}

TEST_CASE("spmm: 3x3 random sparse times 3x2 matches the dense product") {
  Rng rng(2);
  const auto s = random_sparse(3, 0.6, rng);
  const auto x = random_dense(3, 2, rng);
  const auto got = spmm(s, x);
  const auto want = dense_product(s.to_dense(), x);
  for (std::size_t i = 0; i < got.data().size(); ++i) {
    CHECK(std::abs(got.data()[i] - want.data()[i]) <= 1e-12);
  }
}

TEST_CASE("spmm: agrees with the dense oracle on random 50-node instances") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    const auto s = random_sparse(50, 0.1, rng);
    const auto x = random_dense(50, 8, rng);
    CHECK(frobenius_rel(spmm(s, x), dense_product(s.to_dense(), x)) <= 1e-12);
  }
}

TEST_CASE("spmm: an empty row gives a zero output row") {
  const auto s = CsrMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {0, 1, 2.0}});
  DenseMatrix x(2, 2, 1.0);
  const auto y = spmm(s, x);
  CHECK(y(1, 0) == 0.0);
  CHECK(y(1, 1) == 0.0);
  CHECK(y(0, 0) == 3.0);
}

TEST_CASE("spmm: dimension mismatch is rejected") {
  CHECK_THROWS_AS(spmm(CsrMatrix::identity(3), DenseMatrix(2, 2)), ShapeError);
  CHECK_THROWS_AS(matmul(DenseMatrix(2, 3), DenseMatrix(2, 3)), ShapeError);
}

TEST_CASE("spmm_row is bitwise identical to the full product") {
  Rng rng(3);
  const auto s = random_sparse(20, 0.3, rng);
  const auto x = random_dense(20, 4, rng);
  const auto full = spmm(s, x);
  std::vector<double> row(4);
  for (std::size_t r = 0; r < 20; ++r) {
    spmm_row(s, x, r, row);
    for (std::size_t c = 0; c < 4; ++c) CHECK(row[c] == full(r, c));
  }
}

TEST_CASE("matmul matches the dense oracle") {
  Rng rng(4);
  const auto a = random_dense(6, 5, rng);
  const auto b = random_dense(5, 3, rng);
  CHECK(frobenius_rel(matmul(a, b), dense_product(a, b)) <= 1e-14);
}
