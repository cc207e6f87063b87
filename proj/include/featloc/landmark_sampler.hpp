#pragma once

#include "featloc/field_optimizer.hpp"
#include "featloc/kdtree.hpp"
#include "featloc/scene.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace featloc {

enum class AnchorMode { random, fps };

struct SamplerConfig {
  int n_anchors = 512;  // 16,384 at full scale
  int k_neighbors = 32;
  AnchorMode anchor_mode = AnchorMode::random;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Score of a Gaussian that is visible in no view; never selected.
inline constexpr double kUnscored = -std::numeric_limits<double>::infinity();

struct ScoredGaussian {
  int index = 0;
  double score = kUnscored;
  int n_views = 0;
};

/// Landmark subset of a scene with centers and unit features cached for matching.
struct LandmarkSet {
  std::vector<int> indices;
  std::vector<Vec3> centers;
  Eigen::MatrixXd features;  // one unit-norm row per landmark

  static LandmarkSet from_indices(const GaussianScene& scene, std::vector<int> indices);
  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
};

/// Average cosine similarity between each Gaussian's feature and the training
/// feature maps sampled at its projected center, over the views it is visible in.
std::vector<ScoredGaussian> score_gaussians(const GaussianScene& scene, std::span<const TrainView> views,
                                            const std::vector<std::vector<int>>& visibility);

/// Spatially uniform anchors: a seeded uniform draw without replacement, or
/// farthest-point sampling from a seeded start.
std::vector<int> sample_anchors(const GaussianScene& scene, const SamplerConfig& cfg);

/// Farthest-point sampling of n points starting at `start`; ties go to the lowest index.
std::vector<int> farthest_point_sampling(std::span<const Vec3> points, int n, int start);

/// For every anchor, the best-scoring Gaussian among its k nearest centers
/// (anchor included, ties to the lowest index); duplicates removed, first
/// occurrence order kept.
LandmarkSet select_landmarks(const GaussianScene& scene, std::span<const ScoredGaussian> scored,
                             std::span<const int> anchors, const SamplerConfig& cfg, const KdTree& index);

/// Per-anchor picks before de-duplication (-1 when the neighborhood has no
/// visible Gaussian).
std::vector<int> select_per_anchor(std::span<const ScoredGaussian> scored, std::span<const int> anchors,
                                   int k_neighbors, const KdTree& index);

std::vector<int> knn_query(const KdTree& index, const Vec3& point, int k);

/// Matching-oriented selection with an exact landmark count: anchors are a
/// seeded permutation of all Gaussians, consumed in order until `target`
/// distinct picks exist (fewer if the scene runs out).
LandmarkSet select_landmarks_count(const GaussianScene& scene, std::span<const ScoredGaussian> scored, int target,
                                   int k_neighbors, std::uint64_t seed, const KdTree& index);

/// Uniform random subset of `count` Gaussians, seeded.
LandmarkSet random_landmarks(const GaussianScene& scene, int count, std::uint64_t seed);

}  // namespace featloc
