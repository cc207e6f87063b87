#pragma once

#include "featloc/field_optimizer.hpp"
#include "featloc/scene.hpp"
#include "featloc/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace featloc::testing {

inline Quat random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q;
}

inline VecX random_vector(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> n(0.0, 1.0);
  VecX v(d);
  for (int i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

/// Random anisotropic Gaussians inside [-extent, extent]^3.
inline GaussianScene random_scene(std::mt19937_64& rng, int n, int d, double extent = 1.0, double scale_min = 0.05,
                                  double scale_max = 0.3) {
  std::uniform_real_distribution<double> pos(-extent, extent), sc(scale_min, scale_max), op(0.1, 0.99), col(0.0, 1.0);
  std::vector<FeatureGaussian> gs;
  for (int i = 0; i < n; ++i) {
    FeatureGaussian g;
    g.center = Vec3(pos(rng), pos(rng), pos(rng));
    g.rotation = random_rotation(rng);
    g.scale = Vec3(sc(rng), sc(rng), sc(rng));
    g.opacity = op(rng);
    g.color = Vec3(col(rng), col(rng), col(rng));
    g.feature = random_vector(rng, d);
    gs.push_back(g);
  }
  return GaussianScene(std::move(gs));
}

inline CameraIntrinsics square_camera(int size, double fov_deg = 60.0) {
  const double f = 0.5 * size / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  return {f, f, 0.5 * (size - 1), 0.5 * (size - 1), size, size};
}

/// Camera on a sphere of the given radius looking at the origin.
inline SE3Pose random_orbit_pose(std::mt19937_64& rng, double radius) {
  std::uniform_real_distribution<double> az(0.0, 2.0 * std::numbers::pi), el(-0.6, 0.9);
  const double a = az(rng), e = el(rng);
  const Vec3 eye(radius * std::cos(e) * std::cos(a), radius * std::cos(e) * std::sin(a), radius * std::sin(e));
  return look_at(eye, Vec3::Zero());
}

/// Training view rendered from `scene` with features at 1 / stride resolution.
inline TrainView render_view(const GaussianScene& scene, const SE3Pose& pose, const CameraIntrinsics& intr,
                             int stride = 1) {
  TrainView v;
  v.pose = pose;
  v.intr = intr;
  v.image = synthesize_image(scene, pose, intr);
  v.feat = synthesize_feature_map(scene, pose, intr, stride, 0.0, 0);
  return v;
}

}  // namespace featloc::testing
