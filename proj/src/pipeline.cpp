#include "featloc/pipeline.hpp"

#include "featloc/rasterizer.hpp"

#include <cmath>
#include <stdexcept>

namespace featloc {

void LocalizeConfig::validate() const {
  if (dense_iterations < 0) throw std::invalid_argument("LocalizeConfig: dense_iterations must be >= 0");
  if (max_keypoints < 1 || nms_radius < 0) throw std::invalid_argument("LocalizeConfig: bad detector settings");
  matcher.validate();
  ransac.validate();
}

std::string to_string(LocalizeStatus s) {
  switch (s) {
    case LocalizeStatus::ok: return "ok";
    case LocalizeStatus::sparse_failed: return "sparse_failed";
    case LocalizeStatus::dense_degraded: return "dense_degraded";
  }
  return "unknown";
}

std::pair<int, int> fine_grid_size(const CameraIntrinsics& intr, int long_side) {
  if (intr.width >= intr.height)
    return {long_side, std::max(1, int(std::lround(double(intr.height) * long_side / intr.width)))};
  return {std::max(1, int(std::lround(double(intr.width) * long_side / intr.height))), long_side};
}

namespace {

std::vector<Correspondence> inliers_of(const std::vector<Correspondence>& c, const PoseEstimate& e) {
  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (e.inlier_mask[i]) out.push_back(c[i]);
  return out;
}

}  // namespace

LocalizeTrace localize(const FeatureMap& query_fm, const CameraIntrinsics& query_intr, const GaussianScene& scene,
                       const LandmarkSet& landmarks, const DetectorParams& detector, const LocalizeConfig& cfg) {
  cfg.validate();
  query_intr.validate();
  LocalizeTrace trace;
  if (landmarks.empty()) return trace;

  const Heatmap hm = forward(detector, query_fm);
  const auto keypoints = extract_keypoints(hm, query_fm, cfg.nms_radius, cfg.max_keypoints, cfg.min_keypoint_score);
  trace.keypoints = int(keypoints.size());
  const Vec2 fm_to_image = grid_scale(query_fm.width, query_fm.height, query_intr.width, query_intr.height);
  const auto sparse = match_sparse(keypoints, landmarks, cfg.matcher, fm_to_image);
  trace.sparse_matches = int(sparse.size());
  std::vector<Correspondence> sparse_corr;
  for (const auto& m : sparse) sparse_corr.push_back({m.pixel, m.point});
  trace.pose_sparse = ransac_pnp(sparse_corr, query_intr, cfg.ransac);
  if (!trace.pose_sparse) return trace;
  trace.status = LocalizeStatus::ok;
  trace.final_pose = trace.pose_sparse->pose;
  if (cfg.dense_iterations == 0) return trace;

  const auto [fw, fh] = fine_grid_size(query_intr, cfg.matcher.fine_long_side);
  const CameraIntrinsics render_intr = query_intr.scaled_to(fw, fh);
  const FeatureMap query_fine = resize_bilinear(query_fm, fw, fh);
  // Rendered features take the same resampling path as the query map.
  const bool resample = query_fm.width != fw || query_fm.height != fh;
  const CameraIntrinsics feature_intr = query_intr.scaled_to(query_fm.width, query_fm.height);
  const Vec2 fine_to_image = grid_scale(fw, fh, query_intr.width, query_intr.height);
  const SE3Pose sparse_pose = trace.pose_sparse->pose;
  const int sparse_inliers = trace.pose_sparse->n_inliers;

  for (int it = 0; it < cfg.dense_iterations; ++it) {
    DenseIterationStats stats;
    RenderOutput rendered = render(scene, trace.final_pose, render_intr);
    if (resample) rendered.feature = resize_bilinear(render(scene, trace.final_pose, feature_intr).feature, fw, fh);
    const DenseMatches dense = match_dense(query_fine, rendered, cfg.matcher);
    stats.coarse_matches = int(dense.coarse.size());
    stats.fine_matches = int(dense.fine.size());
    const LiftResult lifted = lift_to_3d(dense.fine, rendered, trace.final_pose, render_intr, fine_to_image);
    stats.lifted_matches = int(lifted.correspondences.size());
    stats.dropped_matches = lifted.dropped;
    RansacConfig rc = cfg.ransac;
    rc.seed = cfg.ransac.seed + std::uint64_t(it) + 1;
    const auto est = ransac_pnp(lifted.correspondences, query_intr, rc);
    stats.solved = est.has_value();
    if (est) {
      const auto in = inliers_of(lifted.correspondences, *est);
      const double rms = reprojection_rms(est->pose, in, query_intr);
      stats.accepted = est->n_inliers >= sparse_inliers && rms <= reprojection_rms(trace.final_pose, in, query_intr) &&
                       rms <= reprojection_rms(sparse_pose, in, query_intr);
      trace.pose_dense_per_iter.push_back(*est);
    }
    trace.dense_stats.push_back(stats);
    if (!stats.accepted) {
      trace.status = LocalizeStatus::dense_degraded;
      break;
    }
    trace.final_pose = est->pose;
  }
  return trace;
}

}  // namespace featloc
