#pragma once

#include "featloc/matcher.hpp"
#include "featloc/rasterizer.hpp"
#include "featloc/scene.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace featloc {

struct Correspondence {
  Vec2 pixel;  // image resolution
  Vec3 point;  // world
};

struct RansacConfig {
  int max_iters = 10000;
  double reproj_threshold_px = 3.0;
  double confidence = 0.9999;
  std::uint64_t seed = 0;
  bool refine = true;

  void validate() const;
};

struct PoseEstimate {
  SE3Pose pose;
  std::vector<bool> inlier_mask;
  int n_inliers = 0;
  double mean_reproj_err_px = 0.0;  // over inliers
  bool converged = false;
  int iterations = 0;  // RANSAC hypotheses drawn
};

/// Pixel distance between c.pixel and the projection of c.point; infinity
/// when the point is not in front of the camera.
double reprojection_error(const SE3Pose& pose, const Correspondence& c, const CameraIntrinsics& intr);

/// Root mean square reprojection error over `cs` (0 for an empty set).
double reprojection_rms(const SE3Pose& pose, std::span<const Correspondence> cs, const CameraIntrinsics& intr);

struct P3PResult {
  std::vector<SE3Pose> poses;  // at most 4
  bool degenerate = false;
};

/// Grunert's three-point solution: a quartic in the ratio of two point
/// distances, solved through its companion matrix. Roots whose imaginary
/// part exceeds 1e-9 * (1 + |real part|) are discarded; real roots and the
/// three distances are Newton-polished, and the pose follows from aligning
/// the two point triples. Only candidates that reproject all three points
/// within 1e-6 px are returned.
P3PResult p3p_solve(std::span<const Correspondence> c, const CameraIntrinsics& intr);

/// Seeded RANSAC over 4-point samples (3 for P3P, 1 to pick among its
/// candidates). nullopt with fewer than 4 correspondences or when no model
/// reaches 4 inliers.
std::optional<PoseEstimate> ransac_pnp(std::span<const Correspondence> c, const CameraIntrinsics& intr,
                                       const RansacConfig& cfg);

struct RefineResult {
  SE3Pose pose;
  int iterations = 0;
  bool converged = false;
};

/// Levenberg-Marquardt on pixel residuals with the update
/// R <- R Exp(omega), t <- t + v. Steps that do not lower the cost are
/// rejected, so the result is never worse than the input.
RefineResult refine_pose_ex(const SE3Pose& pose, std::span<const Correspondence> inliers,
                            const CameraIntrinsics& intr);

SE3Pose refine_pose(const SE3Pose& pose, std::span<const Correspondence> inliers, const CameraIntrinsics& intr);

struct LiftResult {
  std::vector<Correspondence> correspondences;
  std::vector<int> match_index;  // fine match each correspondence came from
  int dropped = 0;
};

/// Backprojects the rendered pixel of every fine match at its rendered depth.
/// `render_intr` is the camera of the render grid; `to_image` maps query
/// fine-grid pixels to query image pixels. Matches on pixels with
/// acc_alpha <= kValidAlpha are dropped.
LiftResult lift_to_3d(std::span<const FineMatch> matches, const RenderOutput& rendered, const SE3Pose& render_pose,
                      const CameraIntrinsics& render_intr, const Vec2& to_image = Vec2::Ones());

}  // namespace featloc
