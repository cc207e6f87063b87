#pragma once

#include "featloc/field_optimizer.hpp"
#include "featloc/rasterizer.hpp"
#include "featloc/scene.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace featloc {

/// surface: Gaussians are flattened discs on the four sides and the top of a
/// box, like an object on a table. volume: free Gaussians filling the box.
enum class SceneLayout { surface, volume };

struct SyntheticConfig {
  std::uint64_t seed = 0;
  int n_gaussians = 3000;
  int feature_dim = 16;
  double extent = 1.0;  // centers lie in [-extent, extent]^3
  SceneLayout layout = SceneLayout::surface;
  int n_train_views = 24;
  int n_query_views = 20;
  int image_width = 320;
  int image_height = 240;
  double fov_deg = 60.0;  // horizontal
  int feature_stride = 2;  // image pixels per feature-map texel
  double orbit_radius_min = 3.5;
  double orbit_radius_max = 4.0;
  double elevation_min_deg = 15.0;
  double elevation_max_deg = 45.0;
  double feature_noise_sigma = 0.01;
  double opacity_min = 0.6;
  double opacity_max = 1.0;
  double scale_min = 0.03;
  double scale_max = 0.08;
  double disc_thickness = 0.1;  // normal-axis scale relative to the in-plane scales
  /// Queries must see at least this fraction of the Gaussians.
  double min_visible_fraction = 0.3;
  int max_pose_attempts = 100;

  void validate() const;
};

struct QueryView {
  std::string name;
  SE3Pose pose;  // ground truth
  CameraIntrinsics intr;
  FeatureMap feat;
};

struct SyntheticDataset {
  GaussianScene scene;
  std::vector<std::string> train_names;
  std::vector<TrainView> train;
  std::vector<QueryView> queries;
};

/// World-to-camera pose at `eye` looking at `target`, world up +z, camera
/// axes x right, y down, z forward.
SE3Pose look_at(const Vec3& eye, const Vec3& target);

CameraIntrinsics synthetic_intrinsics(const SyntheticConfig& cfg);

/// Feature map and image seen from a pose: the reference renderer at
/// feature-map resolution (plus per-texel noise on covered texels, then
/// renormalized) and at image resolution.
FeatureMap synthesize_feature_map(const GaussianScene& scene, const SE3Pose& pose, const CameraIntrinsics& intr,
                                  int stride, double noise_sigma, std::uint64_t noise_seed);
ImageBuffer synthesize_image(const GaussianScene& scene, const SE3Pose& pose, const CameraIntrinsics& intr);

GaussianScene synthesize_scene(const SyntheticConfig& cfg);

/// Deterministic under cfg.seed. Query poses are redrawn until at least
/// min_visible_fraction of the Gaussians are visible.
SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

/// Copy of the scene with colors set to 0.5 and features replaced by seeded
/// random unit vectors: the starting point for field fitting.
GaussianScene reset_appearance(const GaussianScene& scene, std::uint64_t seed);

}  // namespace featloc
