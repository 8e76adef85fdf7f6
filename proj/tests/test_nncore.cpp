#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "agdet/nncore.hpp"
#include "oracles.hpp"

using namespace agdet;
using Catch::Matchers::WithinAbs;

TEST_CASE("softmax_rows examples", "[nncore]") {
  const Matrix m(3, 3, {0, 0, 0, 0, std::log(2.0), 0, 1000, 1000, -1000});
  const Matrix s = softmax_rows(m);
  for (int j = 0; j < 3; ++j) CHECK_THAT(s(0, j), WithinAbs(1.0 / 3.0, 1e-15));

  const Matrix two = softmax_rows(Matrix(1, 2, {0, std::log(2.0)}));
  CHECK_THAT(two(0, 0), WithinAbs(1.0 / 3.0, 1e-15));
  CHECK_THAT(two(0, 1), WithinAbs(2.0 / 3.0, 1e-15));

  // large magnitudes stay finite thanks to the max shift
  CHECK_THAT(s(2, 0), WithinAbs(0.5, 1e-15));
  CHECK(s(2, 2) >= 0.0);
}

TEST_CASE("softmax is shift invariant and normalized", "[nncore][property]") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix x = oracle::random_matrix(4, 1 + rng() % 9, rng, 3.0);
    Matrix shifted = x;
    const double c = std::normal_distribution<double>(0, 50)(rng);
    for (double& v : shifted.data()) v += c;
    const Matrix a = softmax_rows(x);
    const Matrix b = softmax_rows(shifted);
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < a.cols(); ++j) {
        CHECK_THAT(a(i, j), WithinAbs(b(i, j), 1e-12));
        CHECK(a(i, j) > 0.0);
        CHECK(a(i, j) <= 1.0);
        total += a(i, j);
      }
      CHECK_THAT(total, WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("mha with a single key ignores the query", "[nncore]") {
  std::mt19937_64 rng(2);
  const std::size_t c = 8;
  AttentionParams p{oracle::random_matrix(c, c, rng), oracle::random_matrix(c, c, rng),
                    oracle::random_matrix(c, c, rng), oracle::random_matrix(c, c, rng), 2};
  const Matrix k = oracle::random_matrix(1, c, rng);
  const Matrix v = oracle::random_matrix(1, c, rng);
  const Matrix expect = matmul(matmul(v, p.wv), p.wo);
  for (int trial = 0; trial < 3; ++trial) {
    const Matrix out = mha(oracle::random_matrix(3, c, rng), k, v, p);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < c; ++j) CHECK_THAT(out(i, j), WithinAbs(expect(0, j), 1e-12));
  }
}

TEST_CASE("mha with uniform scores averages values", "[nncore]") {
  const std::size_t c = 4;
  const AttentionParams p = AttentionParams::identity(c, 1);
  const Matrix q(2, c);  // zero queries give equal scores for every key
  std::mt19937_64 rng(3);
  const Matrix kv = oracle::random_matrix(5, c, rng);
  const Matrix out = mha(q, kv, kv, p);
  for (std::size_t j = 0; j < c; ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < 5; ++r) mean += kv(r, j) / 5.0;
    CHECK_THAT(out(0, j), WithinAbs(mean, 1e-12));
    CHECK_THAT(out(1, j), WithinAbs(mean, 1e-12));
  }
}

TEST_CASE("mha matches the per-head loop reference", "[nncore]") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t c = 8;
    AttentionParams p{oracle::random_matrix(c, c, rng, 0.5), oracle::random_matrix(c, c, rng, 0.5),
                      oracle::random_matrix(c, c, rng, 0.5), oracle::random_matrix(c, c, rng, 0.5), 2};
    const Matrix q = oracle::random_matrix(3, c, rng);
    const Matrix k = oracle::random_matrix(5, c, rng);
    const Matrix v = oracle::random_matrix(5, c, rng);
    const Matrix out = mha(q, k, v, p);
    CHECK(oracle::max_abs_diff(oracle::mha(oracle::to_grid(q), oracle::to_grid(k), oracle::to_grid(v), p), out) <
          1e-12);

    for (const Matrix& w : attention_weights(q, k, p)) {
      for (std::size_t i = 0; i < w.rows(); ++i) {
        double total = 0.0;
        for (double x : w.row(i)) {
          CHECK(x >= 0.0);
          total += x;
        }
        CHECK_THAT(total, WithinAbs(1.0, 1e-12));
      }
    }
  }
}

TEST_CASE("mha shape errors", "[nncore]") {
  const AttentionParams p = AttentionParams::identity(4, 2);
  CHECK_THROWS_AS(mha(Matrix(2, 3), Matrix(2, 4), Matrix(2, 4), p), Error);
  CHECK_THROWS_AS(mha(Matrix(2, 4), Matrix(2, 4), Matrix(3, 4), p), Error);
  AttentionParams bad = AttentionParams::identity(4, 1);
  bad.heads = 3;
  CHECK_THROWS_AS(mha(Matrix(2, 4), Matrix(2, 4), Matrix(2, 4), bad), Error);
}

TEST_CASE("mlp examples", "[nncore]") {
  MlpParams zero = MlpParams::zeros(3, 3, 2);
  zero.b2 = {1.5, -2.0};
  const Matrix out = mlp(Matrix(4, 3, std::vector<double>(12, 7.0)), zero);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(out(i, 0) == 1.5);
    CHECK(out(i, 1) == -2.0);
  }

  const MlpParams ident{Matrix::identity(1), {0.0}, Matrix::identity(1), {0.0}};
  CHECK(mlp(Matrix(1, 1, {3.25}), ident)(0, 0) == 3.25);
  CHECK(mlp(Matrix(1, 1, {-3.25}), ident)(0, 0) == 0.0);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const MlpParams p{oracle::random_matrix(6, 5, rng), std::vector<double>{0.1, -0.2, 0.3, 0, 0.5},
                      oracle::random_matrix(5, 3, rng), std::vector<double>{1, 2, 3}};
    const Matrix x = oracle::random_matrix(4, 6, rng);
    CHECK(oracle::max_abs_diff(oracle::mlp(oracle::to_grid(x), p), mlp(x, p)) < 1e-12);
  }
  CHECK_THROWS_AS(mlp(Matrix(1, 2), zero), Error);
}

TEST_CASE("embed_points examples", "[nncore]") {
  const std::vector<Vec3> pts{{0, 0, 0}, {std::numbers::pi, 0, 0}, {std::numbers::pi, 0, 0}};
  const Matrix e = embed_points(pts, 12);  // two bands per axis
  REQUIRE(e.rows() == 3);
  REQUIRE(e.cols() == 12);
  for (std::size_t col = 0; col < 12; col += 2) {
    CHECK(e(0, col) == 0.0);
    CHECK(e(0, col + 1) == 1.0);
  }
  CHECK_THAT(e(1, 0), WithinAbs(0.0, 1e-15));
  CHECK_THAT(e(1, 1), WithinAbs(-1.0, 1e-15));
  CHECK(e.row(1)[5] == e.row(2)[5]);
  CHECK(std::ranges::equal(e.row(1), e.row(2)));

  // 8 columns: one band per axis, two zero-padded columns
  const Matrix padded = embed_points(pts, 8);
  CHECK(padded(1, 6) == 0.0);
  CHECK(padded(1, 7) == 0.0);
  CHECK(padded(0, 1) == 1.0);

  CHECK_THROWS_AS(embed_points(pts, 7), Error);
  CHECK_THROWS_AS(embed_points(pts, 4), Error);
}
