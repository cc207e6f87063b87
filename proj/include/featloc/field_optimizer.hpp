#pragma once

#include "featloc/rasterizer.hpp"
#include "featloc/scene.hpp"

#include <span>
#include <vector>

namespace featloc {

struct TrainConfig {
  double lambda_dssim = 0.2;
  double weight_rgb = 1.0;
  double weight_feat = 1.0;
  double lr_feature = 0.001;
  double lr_color = 0.0025;
  /// Learning rates decay exponentially to lr * lr_final_ratio at the last step.
  double lr_final_ratio = 1.0;
  int steps = 3000;
  int batch = 1;  // views per step, taken round-robin

  void validate() const;
};

struct TrainView {
  SE3Pose pose;
  CameraIntrinsics intr;  // of the image
  ImageBuffer image;
  FeatureMap feat;  // may be coarser than the image

  CameraView camera() const { return {pose, intr}; }
  /// Intrinsics of the feature-map grid.
  CameraIntrinsics feature_intrinsics() const { return intr.scaled_to(feat.width, feat.height); }
};

/// (1 - lambda) * mean |rendered - target| + lambda * (1 - SSIM) / 2.
double loss_rgb(const ImageBuffer& rendered, const ImageBuffer& target, double lambda);

/// Mean absolute elementwise difference.
double loss_feature(const FeatureMap& rendered, const FeatureMap& target);

double total_loss(const TrainView& view, const GaussianScene& scene, const TrainConfig& cfg);

struct AttributeGradients {
  double loss = 0.0;
  std::vector<Vec3> color;
  std::vector<VecX> feature;
};

/// Loss and its exact gradient w.r.t. every c_i and f_i. Blending weights do
/// not depend on appearance, so the gradient flows through the two feature
/// normalizations, L1 (zero subgradient at ties) and D-SSIM only.
AttributeGradients grad_attributes(const TrainView& view, const GaussianScene& scene,
                                   const TrainConfig& cfg);

struct FitResult {
  GaussianScene scene;
  std::vector<double> loss_trace;
};

/// Adam on colors and features with geometry held fixed. Colors are projected
/// back into [0, 1] after each step.
FitResult fit_field(const GaussianScene& scene, std::span<const TrainView> views, const TrainConfig& cfg);

}  // namespace featloc
