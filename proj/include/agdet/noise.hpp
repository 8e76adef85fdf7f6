#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "agdet/core.hpp"
#include "agdet/random.hpp"

namespace agdet {

struct NoiseConfig {
  double noise_level = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(noise_level >= 0.0 && noise_level <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "noise_level must lie in [0, 1]");
    }
  }
};

/// Noise levels of the robustness sweep.
inline constexpr double kNoiseSweep[] = {0.001, 0.005, 0.01, 0.1, 0.2, 0.3};

/// Adds independent N(0, sigma^2) noise to every coordinate, with
/// sigma = bounding_range(cloud) * noise_level. Coordinate (point i, axis a)
/// uses draw number 3*i + a, so the result does not depend on evaluation order.
inline PointCloud perturb(const PointCloud& cloud, const NoiseConfig& cfg) {
  cfg.validate();
  const double sigma = bounding_range(cloud) * cfg.noise_level;
  if (sigma == 0.0) return cloud;

  const CounterRng rng(cfg.seed);
  const auto pts = cloud.points();
  std::vector<Vec3> out(pts.begin(), pts.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t a = 0; a < 3; ++a) out[i][a] += sigma * rng.normal(3 * static_cast<std::uint64_t>(i) + a);
  }
  return PointCloud(std::move(out));
}

}  // namespace agdet
