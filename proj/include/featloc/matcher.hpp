#pragma once

#include "featloc/detector.hpp"
#include "featloc/landmark_sampler.hpp"
#include "featloc/rasterizer.hpp"
#include "featloc/scene.hpp"

#include <span>
#include <vector>

namespace featloc {

struct MatcherConfig {
  double tau = 0.1;
  double sparse_min_sim = 0.2;
  double mnn_min_prob = 0.2;  // coarse level only
  int coarse_long_side = 80;
  int fine_long_side = 640;
  int patch = 8;

  void validate() const;
};

struct SparseMatch {
  int keypoint = 0;
  int landmark = 0;   // row in the LandmarkSet
  Vec2 pixel;         // image resolution
  Vec3 point;         // landmark center
  double similarity = 0.0;
};

/// Keypoint i matched to its most similar landmark (cosine, ties to the lowest
/// row) when the similarity reaches sparse_min_sim. `to_image` maps
/// feature-map coordinates to image pixels per axis.
std::vector<SparseMatch> match_sparse(std::span<const Keypoint> keypoints, const LandmarkSet& landmarks,
                                      const MatcherConfig& cfg, const Vec2& to_image = Vec2::Ones());

/// Elementwise product of the row-wise and column-wise softmax of S / tau.
Eigen::MatrixXd dual_softmax(const Eigen::MatrixXd& S, double tau);

struct MnnPair {
  int row = 0;
  int col = 0;
  double prob = 0.0;
};

/// Mutual argmax pairs (ties to the lowest index) with P >= min_prob, by row.
std::vector<MnnPair> mnn(const Eigen::MatrixXd& P, double min_prob);

/// mnn(dual_softmax(S, tau), min_prob) evaluated in log space without
/// forming P.
std::vector<MnnPair> dual_softmax_mnn(const Eigen::MatrixXd& S, double tau, double min_prob);

struct CoarseMatch {
  int query_x = 0, query_y = 0;  // cell coordinates
  int render_x = 0, render_y = 0;
  double prob = 0.0;
};

struct FineMatch {
  Vec2 query;   // pixel
  Vec2 render;  // pixel
  double prob = 0.0;
  int coarse = 0;  // index of the parent coarse match
};

struct DenseMatches {
  std::vector<CoarseMatch> coarse;
  std::vector<FineMatch> fine;
};

/// Unit feature of each patch x patch cell: the map bilinearly sampled at the
/// cell center and renormalized (zero when the sample is zero). Row-major
/// cells, one row per cell.
Eigen::MatrixXd coarse_features(const FeatureMap& fm, int patch);

/// A rendered cell is usable when more than half of its pixels have
/// acc_alpha > kValidAlpha.
std::vector<bool> valid_render_cells(const Grid2D& acc_alpha, int patch);

/// Coarse dual-softmax MNN over valid cells, then for every coarse match one
/// fine MNN pair (highest probability) inside the two full-resolution patches.
/// Both maps must share a size whose long side is cfg.fine_long_side.
DenseMatches match_dense(const FeatureMap& query_fm, const RenderOutput& rendered, const MatcherConfig& cfg);

}  // namespace featloc
