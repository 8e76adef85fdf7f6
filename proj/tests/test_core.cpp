#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

#include "agdet/core.hpp"

using namespace agdet;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an agdet::Error");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("bounding_range spans all axes", "[core]") {
  std::vector<Vec3> cube;
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y)
      for (int z = 0; z < 2; ++z) cube.push_back({double(x), double(y), double(z)});
  CHECK(bounding_range(PointCloud(cube)) == 1.0);
  CHECK(bounding_range(PointCloud({{5, 5, 5}})) == 0.0);
  CHECK(bounding_range(PointCloud({{-1, 0, 0}, {0, 0, 2}})) == 3.0);
}

TEST_CASE("empty clouds are rejected", "[core]") {
  CHECK(code_of([] { PointCloud c({}); }) == ErrorCode::EmptyCloud);
  CHECK(code_of([] { (void)bounding_range(std::span<const Vec3>{}); }) == ErrorCode::EmptyCloud);
}

TEST_CASE("constructors reject injected non-finite values", "[core][property]") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-10, 10);
  const double bad[] = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::infinity(),
                        -std::numeric_limits<double>::infinity()};

  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 20;
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    std::vector<double> w(n);
    for (auto& x : w) x = u(rng);
    REQUIRE_NOTHROW(PointCloud(pts));
    REQUIRE_NOTHROW(AttentionField(w));

    const double poison = bad[rng() % 3];
    auto pts_bad = pts;
    pts_bad[rng() % n][rng() % 3] = poison;
    CHECK(code_of([&] { PointCloud c(pts_bad); }) == ErrorCode::NonFinite);

    auto w_bad = w;
    w_bad[rng() % n] = poison;
    CHECK(code_of([&] { AttentionField a(w_bad); }) == ErrorCode::NonFinite);

    std::vector<double> buf(n * 3);
    for (auto& x : buf) x = u(rng);
    buf[rng() % buf.size()] = poison;
    CHECK(code_of([&] { Matrix m(n, 3, buf); }) == ErrorCode::NonFinite);

    Vec3 c{u(rng), u(rng), u(rng)};
    c[rng() % 3] = poison;
    CHECK(code_of([&] { Box3D b(c, {1, 1, 1}); }) == ErrorCode::NonFinite);
  }
}

TEST_CASE("attention must pair with its cloud", "[core]") {
  PointCloud cloud({{0, 0, 0}, {1, 1, 1}});
  CHECK_NOTHROW(AttentionField(cloud, {1.0, 2.0}));
  CHECK(code_of([&] { AttentionField a(cloud, {1.0}); }) == ErrorCode::ShapeError);
}

TEST_CASE("SampleSet rejects duplicates and out-of-range indices", "[core]") {
  CHECK_NOTHROW(SampleSet({2, 0, 1}, 3));
  CHECK(code_of([] { SampleSet s({0, 1, 0}, 3); }) == ErrorCode::DuplicateIndex);
  CHECK(code_of([] { SampleSet s({0, 3}, 3); }) == ErrorCode::IndexOutOfRange);
}

TEST_CASE("SamplerConfig validation", "[core]") {
  SamplerConfig cfg;
  CHECK(cfg.epsilon == 1e-8);
  CHECK(cfg.lambda_dist == 0.8);
  CHECK(cfg.k == 256);
  cfg.k = 3;
  CHECK_NOTHROW(cfg.validate_for(3));
  CHECK(code_of([&] { cfg.validate_for(2); }) == ErrorCode::NotEnoughPoints);
  cfg.epsilon = 0.0;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  cfg.epsilon = 1e-8;
  cfg.lambda_dist = 1.5;
  CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidArgument);
  cfg.lambda_dist = 0.5;
  cfg.start_rule = FixedIndex{5};
  CHECK(code_of([&] { cfg.validate_for(5); }) == ErrorCode::IndexOutOfRange);
}

TEST_CASE("Box3D invariants", "[core]") {
  CHECK(code_of([] { Box3D b({0, 0, 0}, {1, 0, 1}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { Box3D b({0, 0, 0}, {1, 1, 1}, std::numbers::pi); }) == ErrorCode::InvalidArgument);
  CHECK_NOTHROW(Box3D({0, 0, 0}, {1, 1, 1}, -std::numbers::pi));
  Box3D b({1, 1, 1}, {2, 2, 2});
  CHECK(b.contains({0, 0, 0}));
  CHECK(b.contains({2, 2, 2}));
  CHECK_FALSE(b.contains({2.0001, 1, 1}));
}

TEST_CASE("DetectionSet validates scores", "[core]") {
  Box3D b({0, 0, 0}, {1, 1, 1});
  CHECK_NOTHROW(DetectionSet({{b, 0, 0.0}, {b, 1, 1.0}}));
  CHECK(code_of([&] { DetectionSet d({{b, 0, 1.5}}); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { DetectionSet d({{b, -1, 0.5}}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("FeatureLevels share one shape", "[core]") {
  CHECK_NOTHROW(FeatureLevels({Matrix(4, 2), Matrix(4, 2)}, {4, 11}));
  CHECK(code_of([] { FeatureLevels f({Matrix(4, 2), Matrix(3, 2)}); }) == ErrorCode::ShapeError);
  CHECK(code_of([] { FeatureLevels f(std::vector<Matrix>{}); }) == ErrorCode::ShapeError);
  FeatureLevels f({Matrix(4, 2)});
  CHECK(f.level_ids()[0] == 0);
}

TEST_CASE("token concatenation stacks views", "[core]") {
  Matrix a(2, 3, {1, 2, 3, 4, 5, 6});
  Matrix b(1, 3, {7, 8, 9});
  const std::vector<Matrix> views{a, b};
  const Matrix t = concat_tokens(views);
  REQUIRE(t.rows() == 3);
  CHECK(t(2, 0) == 7);
  CHECK(t(1, 2) == 6);
}
