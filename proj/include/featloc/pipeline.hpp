#pragma once

#include "featloc/detector.hpp"
#include "featloc/landmark_sampler.hpp"
#include "featloc/matcher.hpp"
#include "featloc/pose_estimator.hpp"
#include "featloc/scene.hpp"

#include <optional>
#include <string>
#include <vector>

namespace featloc {

struct LocalizeConfig {
  int dense_iterations = 1;
  MatcherConfig matcher;
  RansacConfig ransac;
  int max_keypoints = 2048;
  int nms_radius = 4;
  double min_keypoint_score = 0.003;

  void validate() const;
};

enum class LocalizeStatus { ok, sparse_failed, dense_degraded };

std::string to_string(LocalizeStatus s);

struct DenseIterationStats {
  int coarse_matches = 0;
  int fine_matches = 0;
  int lifted_matches = 0;
  int dropped_matches = 0;
  bool solved = false;
  bool accepted = false;
};

struct LocalizeTrace {
  LocalizeStatus status = LocalizeStatus::sparse_failed;
  int keypoints = 0;
  int sparse_matches = 0;
  std::optional<PoseEstimate> pose_sparse;
  std::vector<PoseEstimate> pose_dense_per_iter;  // one per iteration that produced a model
  std::vector<DenseIterationStats> dense_stats;   // one per iteration run
  SE3Pose final_pose;

  bool has_pose() const { return pose_sparse.has_value(); }
};

/// Size of the dense matching grid: the query aspect ratio with long side
/// `long_side`.
std::pair<int, int> fine_grid_size(const CameraIntrinsics& intr, int long_side);

/// Sparse stage (detect, match landmarks, RANSAC PnP) followed by
/// dense_iterations rounds of render, dense match, lift and RANSAC PnP.
/// When the query map is coarser than the dense grid, rendered features are
/// produced at the query map's resolution and resized like the query.
/// A dense round is kept only if it solves with at least as many inliers as
/// the sparse estimate and its inlier reprojection RMS is no higher than
/// that of the previous pose and of the sparse pose on the same inliers;
/// otherwise the previous pose is kept, the status becomes dense_degraded and
/// iteration stops.
LocalizeTrace localize(const FeatureMap& query_fm, const CameraIntrinsics& query_intr, const GaussianScene& scene,
                       const LandmarkSet& landmarks, const DetectorParams& detector, const LocalizeConfig& cfg);

}  // namespace featloc
