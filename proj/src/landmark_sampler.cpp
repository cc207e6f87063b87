#include "featloc/landmark_sampler.hpp"

#include "featloc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

namespace featloc {

void SamplerConfig::validate() const {
  if (n_anchors < 1) throw std::invalid_argument("SamplerConfig: n_anchors must be >= 1");
  if (k_neighbors < 1) throw std::invalid_argument("SamplerConfig: k_neighbors must be >= 1");
}

LandmarkSet LandmarkSet::from_indices(const GaussianScene& scene, std::vector<int> indices) {
  LandmarkSet set;
  set.indices = std::move(indices);
  set.features.resize(Eigen::Index(set.indices.size()), scene.feature_dim());
  for (std::size_t r = 0; r < set.indices.size(); ++r) {
    const auto& g = scene[std::size_t(set.indices[r])];
    set.centers.push_back(g.center);
    const double n = g.feature.norm();
    set.features.row(Eigen::Index(r)) = n > 0.0 ? VecX(g.feature / n) : VecX(VecX::Zero(g.feature.size()));
  }
  return set;
}

std::vector<ScoredGaussian> score_gaussians(const GaussianScene& scene, std::span<const TrainView> views,
                                            const std::vector<std::vector<int>>& visibility) {
  if (visibility.size() != scene.size()) throw std::invalid_argument("score_gaussians: visibility size mismatch");
  std::vector<ScoredGaussian> out(scene.size());
  parallel_for(int(scene.size()), [&](int i) {
    out[i].index = i;
    const double fn = scene[i].feature.norm();
    double sum = 0.0;
    int count = 0;
    for (const int v : visibility[i]) {
      const TrainView& view = views[std::size_t(v)];
      const auto p = project(scene[i].center, view.pose, view.intr);
      if (!p) continue;
      const Vec2 s = grid_scale(view.intr.width, view.intr.height, view.feat.width, view.feat.height);
      const double u = std::clamp(p->u * s.x(), 0.0, double(view.feat.width - 1));
      const double w = std::clamp(p->v * s.y(), 0.0, double(view.feat.height - 1));
      const VecX sample = bilinear_sample(view.feat, u, w);
      const double sn = sample.norm();
      // A zero sample or zero feature carries no direction and scores 0.
      sum += (fn > 0.0 && sn > 0.0) ? scene[i].feature.dot(sample) / (fn * sn) : 0.0;
      ++count;
    }
    out[i].n_views = count;
    out[i].score = count > 0 ? std::clamp(sum / count, -1.0, 1.0) : kUnscored;
  });
  return out;
}

std::vector<int> farthest_point_sampling(std::span<const Vec3> points, int n, int start) {
  const int size = int(points.size());
  if (n > size || n < 0) throw std::invalid_argument("farthest_point_sampling: n exceeds point count");
  std::vector<int> out;
  if (n == 0) return out;
  std::vector<double> dist(size, std::numeric_limits<double>::infinity());
  int current = start;
  for (int s = 0; s < n; ++s) {
    out.push_back(current);
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < size; ++i) {
      dist[i] = std::min(dist[i], (points[i] - points[current]).squaredNorm());
      if (dist[i] > best_d) {
        best_d = dist[i];
        best = i;
      }
    }
    current = best;
  }
  return out;
}

std::vector<int> sample_anchors(const GaussianScene& scene, const SamplerConfig& cfg) {
  cfg.validate();
  const int size = int(scene.size());
  if (cfg.n_anchors > size) throw std::invalid_argument("sample_anchors: more anchors than Gaussians");
  std::mt19937_64 rng(cfg.seed);
  if (cfg.anchor_mode == AnchorMode::fps) {
    const auto centers = scene.centers();
    const int start = int(rng() % std::uint64_t(size));
    return farthest_point_sampling(centers, cfg.n_anchors, start);
  }
  // Partial Fisher-Yates.
  std::vector<int> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < cfg.n_anchors; ++i) {
    const int j = i + int(rng() % std::uint64_t(size - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(cfg.n_anchors);
  return idx;
}

std::vector<int> knn_query(const KdTree& index, const Vec3& point, int k) { return index.knn(point, k); }

std::vector<int> select_per_anchor(std::span<const ScoredGaussian> scored, std::span<const int> anchors,
                                   int k_neighbors, const KdTree& index) {
  std::vector<int> picks(anchors.size(), -1);
  parallel_for(int(anchors.size()), [&](int a) {
    const auto neighbors = index.knn(index.point(anchors[a]), k_neighbors);
    int best = -1;
    for (const int n : neighbors) {
      const double s = scored[n].score;
      if (s == kUnscored) continue;
      if (best < 0 || s > scored[best].score || (s == scored[best].score && n < best)) best = n;
    }
    picks[a] = best;
  });
  return picks;
}

LandmarkSet select_landmarks(const GaussianScene& scene, std::span<const ScoredGaussian> scored,
                             std::span<const int> anchors, const SamplerConfig& cfg, const KdTree& index) {
  cfg.validate();
  if (scored.size() != scene.size() || index.size() != scene.size())
    throw std::invalid_argument("select_landmarks: scores or index do not match the scene");
  const int k = std::min<int>(cfg.k_neighbors, int(scene.size()));
  const auto picks = select_per_anchor(scored, anchors, k, index);
  std::vector<int> unique;
  std::unordered_set<int> seen;
  for (const int p : picks) {
    if (p >= 0 && seen.insert(p).second) unique.push_back(p);
  }
  return LandmarkSet::from_indices(scene, std::move(unique));
}

LandmarkSet select_landmarks_count(const GaussianScene& scene, std::span<const ScoredGaussian> scored, int target,
                                   int k_neighbors, std::uint64_t seed, const KdTree& index) {
  SamplerConfig cfg;
  cfg.n_anchors = int(scene.size());
  cfg.k_neighbors = k_neighbors;
  cfg.seed = seed;
  const auto anchors = sample_anchors(scene, cfg);
  const int k = std::min<int>(k_neighbors, int(scene.size()));
  const auto picks = select_per_anchor(scored, anchors, k, index);
  std::vector<int> unique;
  std::unordered_set<int> seen;
  for (const int p : picks) {
    if (int(unique.size()) >= target) break;
    if (p >= 0 && seen.insert(p).second) unique.push_back(p);
  }
  return LandmarkSet::from_indices(scene, std::move(unique));
}

LandmarkSet random_landmarks(const GaussianScene& scene, int count, std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.n_anchors = std::min<int>(count, int(scene.size()));
  cfg.seed = seed;
  return LandmarkSet::from_indices(scene, sample_anchors(scene, cfg));
}

}  // namespace featloc
