#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "agdet/eval.hpp"
#include "agdet/sampling.hpp"
#include "agdet/synthgen.hpp"

using namespace agdet;

TEST_CASE("scenes without objects", "[synthgen]") {
  SceneSpec spec;
  spec.min_objects = spec.max_objects = 0;
  spec.num_points = 2000;
  spec.attn_jitter = 0.0;
  const Scene s = generate(spec);
  CHECK(s.gt.empty());
  CHECK(s.cloud.size() == 2000);
  for (double a : s.attention.weights()) CHECK(a == spec.attn_base);

  std::vector<std::size_t> all(50);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  CHECK(concentration(SampleSet(all, s.cloud.size()), s) == 0.0);
}

TEST_CASE("zero jitter with one box gives two attention levels", "[synthgen]") {
  SceneSpec spec;
  spec.min_objects = spec.max_objects = 1;
  spec.attn_jitter = 0.0;
  spec.num_points = 3000;
  const Scene s = generate(spec);
  REQUIRE(s.gt.size() == 1);
  const std::set<double> levels(s.attention.weights().begin(), s.attention.weights().end());
  CHECK(levels == std::set<double>{spec.attn_base, spec.attn_base + spec.attn_bonus});
  for (std::size_t i = 0; i < s.cloud.size(); ++i) {
    CHECK((s.attention.weights()[i] > spec.attn_base) == s.gt[0].box.contains(s.cloud[i]));
  }
}

TEST_CASE("generation is deterministic per seed", "[synthgen]") {
  SceneSpec spec;
  spec.seed = 7;
  const Scene a = generate(spec);
  const Scene b = generate(spec);
  CHECK(a.cloud == b.cloud);
  CHECK(a.attention == b.attention);
  CHECK(a.gt == b.gt);

  spec.seed = 8;
  CHECK_FALSE(generate(spec).cloud == a.cloud);
}

TEST_CASE("boxes are disjoint and inside the room", "[synthgen][property]") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    spec.num_points = 500;
    const Scene s = generate(spec);
    CHECK(s.gt.size() >= spec.min_objects);
    CHECK(s.gt.size() <= spec.max_objects);
    for (std::size_t i = 0; i < s.gt.size(); ++i) {
      const Box3D& b = s.gt[i].box;
      for (int a = 0; a < 3; ++a) {
        CHECK(b.min_corner()[a] >= 0.0);
        CHECK(b.max_corner()[a] <= spec.room[a]);
      }
      CHECK(s.gt[i].label >= 0);
      CHECK(s.gt[i].label < spec.num_classes);
      for (std::size_t j = i + 1; j < s.gt.size(); ++j) CHECK(iou_aabb(b, s.gt[j].box) == 0.0);
    }
    for (double a : s.attention.weights()) CHECK(a >= 0.0);
  }
}

TEST_CASE("impossible packing is reported", "[synthgen]") {
  SceneSpec spec;
  spec.room = {1, 1, 1};
  spec.size_min = spec.size_max = {0.9, 0.9, 0.9};
  spec.min_objects = spec.max_objects = 2;
  spec.max_retries = 20;
  try {
    (void)generate(spec);
    FAIL("packing succeeded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PackingFailed);
  }
}

TEST_CASE("spec validation", "[synthgen]") {
  SceneSpec spec;
  spec.attn_bonus = 0.1;  // not above the jitter std
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = SceneSpec{};
  spec.room = {8, 8, -1};
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("concentration examples", "[synthgen]") {
  SceneSpec spec;
  spec.seed = 3;
  spec.num_points = 2000;
  const Scene s = generate(spec);
  std::vector<std::size_t> inside, outside;
  for (std::size_t i = 0; i < s.cloud.size(); ++i) (inside_any(s.gt, s.cloud[i]) ? inside : outside).push_back(i);
  REQUIRE(inside.size() >= 10);
  REQUIRE(outside.size() >= 10);
  inside.resize(10);
  outside.resize(10);
  CHECK(concentration(SampleSet(inside, s.cloud.size()), s) == 1.0);
  CHECK(concentration(SampleSet(outside, s.cloud.size()), s) == 0.0);
  std::vector<std::size_t> mixed(inside.begin(), inside.begin() + 5);
  mixed.insert(mixed.end(), outside.begin(), outside.begin() + 5);
  CHECK(concentration(SampleSet(mixed, s.cloud.size()), s) == 0.5);
}

TEST_CASE("pure attention sampling stays inside objects", "[synthgen][property]") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    spec.num_points = 3000;
    spec.attn_jitter = 0.0;
    const Scene s = generate(spec);
    std::size_t in_object = 0;
    for (std::size_t i = 0; i < s.cloud.size(); ++i) in_object += inside_any(s.gt, s.cloud[i]) ? 1 : 0;
    SamplerConfig cfg;
    cfg.k = std::min<std::size_t>(256, in_object);
    cfg.lambda_dist = 0.0;
    CHECK(concentration(ag_sample(s.cloud, s.attention, cfg), s) == 1.0);
  }
}

TEST_CASE("attention guidance concentrates samples in objects", "[synthgen]") {
  int wins = 0;
  double margin = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    const Scene s = generate(spec);
    SamplerConfig cfg;
    const double ag = concentration(ag_sample(s.cloud, s.attention, cfg), s);
    const double base = concentration(fps(s.cloud, cfg.k, 0), s);
    wins += ag > base ? 1 : 0;
    margin += ag - base;
  }
  CHECK(wins >= 19);
  CHECK(margin / 20.0 >= 0.65);
}

TEST_CASE("seeded fixtures are reproducible", "[synthgen]") {
  const FeatureLevels a = random_feature_levels(8, 6, 4, 1);
  const FeatureLevels b = random_feature_levels(8, 6, 4, 1);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i] == b[i]);
  CHECK(std::ranges::equal(a.level_ids(), default_level_ids()));
  CHECK_FALSE(a[0] == a[1]);

  const SeeQueryState s = random_see_state(6, 4, 2);
  CHECK(s.q_see.size() == 6);
  CHECK(s.mlp.out_dim() == 4);
  const DecoderParams d = random_decoder_params(6, 2, 3, 2);
  CHECK(d.layers.size() == 3);
  const HeadParams h = random_head_params(6, 18, 2);
  CHECK_NOTHROW(h.validate());
  CHECK(h.num_classes() == 18);
  CHECK(h.cls.rows() == 6);
}
