#include "featloc/kdtree.hpp"
#include "featloc/landmark_sampler.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace featloc;
using namespace featloc::testing;

namespace {

std::vector<int> brute_knn(const std::vector<Vec3>& pts, const Vec3& q, int k) {
  std::vector<std::pair<double, int>> d;
  for (std::size_t i = 0; i < pts.size(); ++i) d.emplace_back((pts[i] - q).squaredNorm(), int(i));
  std::sort(d.begin(), d.end());
  std::vector<int> idx;
  for (const auto& e : d) idx.push_back(e.second);
  idx.resize(std::size_t(k));
  return idx;
}

std::vector<ScoredGaussian> scores_from(const std::vector<double>& s) {
  std::vector<ScoredGaussian> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.push_back({int(i), s[i], std::isinf(s[i]) ? 0 : 1});
  return out;
}

}  // namespace

TEST_CASE("kd-tree neighbors equal a sorted scan") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> pts;
  for (int i = 0; i < 400; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  // Exact duplicates exercise the index tie rule.
  for (int i = 0; i < 20; ++i) pts.push_back(pts[std::size_t(i * 7)]);
  const KdTree tree(pts);
  for (int t = 0; t < 50; ++t) {
    const Vec3 q = t % 5 == 0 ? pts[std::size_t(t)] : Vec3(u(rng), u(rng), u(rng));
    for (const int k : {1, 5, 32}) CHECK(tree.knn(q, k) == brute_knn(pts, q, k));
  }
  CHECK(tree.knn(Vec3::Zero(), 420).size() == 420);
  CHECK_THROWS_AS(tree.knn(Vec3::Zero(), 421), std::invalid_argument);
  CHECK_THROWS_AS(tree.knn(Vec3::Zero(), 0), std::invalid_argument);
}

TEST_CASE("farthest point sampling on a line") {
  std::vector<Vec3> pts;
  for (int i = 0; i <= 10; ++i) pts.emplace_back(double(i), 0.0, 0.0);
  // From 0: the far end, then the middle, then the quarter points.
  CHECK(farthest_point_sampling(pts, 4, 0) == std::vector<int>{0, 10, 5, 2});
  CHECK(farthest_point_sampling(pts, 0, 3).empty());
  CHECK_THROWS(farthest_point_sampling(pts, 12, 0));
}

TEST_CASE("anchors are distinct and seeded") {
  std::mt19937_64 rng(2);
  const GaussianScene scene = random_scene(rng, 300, 3);
  for (const auto mode : {AnchorMode::random, AnchorMode::fps}) {
    const SamplerConfig cfg{50, 8, mode, 9};
    const auto a = sample_anchors(scene, cfg);
    CHECK(a.size() == 50);
    CHECK(std::set<int>(a.begin(), a.end()).size() == 50);
    CHECK(a == sample_anchors(scene, cfg));
  }
  SamplerConfig other{50, 8, AnchorMode::random, 10};
  CHECK(sample_anchors(scene, other) != sample_anchors(scene, {50, 8, AnchorMode::random, 9}));
  CHECK_THROWS(sample_anchors(scene, {301, 8, AnchorMode::random, 0}));
}

TEST_CASE("per-anchor selection takes the best score in the neighborhood") {
  // Four points on a line with k = 2.
  std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2.1, 0, 0), Vec3(3.3, 0, 0)};
  const KdTree tree(pts);
  const auto scored = scores_from({0.1, 0.9, 0.5, kUnscored});
  CHECK(select_per_anchor(scored, std::vector<int>{0, 2, 3}, 2, tree) == std::vector<int>{1, 1, 2});
  // Equal scores go to the lower index; a neighborhood of unscored points gives -1.
  const auto tied = scores_from({0.5, 0.5, kUnscored, kUnscored});
  CHECK(select_per_anchor(tied, std::vector<int>{1, 3}, 2, tree) == std::vector<int>{0, -1});
}

TEST_CASE("landmark selection removes duplicates in order") {
  std::vector<FeatureGaussian> gs;
  for (int i = 0; i < 4; ++i) {
    FeatureGaussian g;
    g.center = Vec3(i * 1.0 + (i == 3 ? 0.2 : 0.0), 0, 0);
    g.scale = Vec3::Constant(0.1);
    g.feature = VecX::Unit(2, i % 2) * (i + 1);
    gs.push_back(g);
  }
  const GaussianScene scene(gs);
  const KdTree tree(scene.centers());
  const auto scored = scores_from({0.1, 0.9, 0.5, 0.2});
  const SamplerConfig cfg{4, 2, AnchorMode::random, 0};
  const LandmarkSet set = select_landmarks(scene, scored, std::vector<int>{3, 0, 1, 2}, cfg, tree);
  CHECK(set.indices == std::vector<int>{2, 1});
  CHECK(set.centers[0].isApprox(scene[2].center));
  CHECK(set.features.row(1).norm() == doctest::Approx(1.0));
  CHECK(set.features(1, 1) == doctest::Approx(1.0));

  const SamplerConfig k1{4, 1, AnchorMode::random, 0};
  CHECK(select_landmarks(scene, scored, std::vector<int>{3, 0}, k1, tree).indices == std::vector<int>{3, 0});
}

TEST_CASE("scores average the cosine with the sampled training features") {
  std::mt19937_64 rng(3);
  const GaussianScene truth = random_scene(rng, 40, 4, 1.0, 0.1, 0.3);
  std::vector<TrainView> views;
  for (int i = 0; i < 3; ++i) views.push_back(render_view(truth, random_orbit_pose(rng, 3.0), square_camera(48)));
  std::vector<CameraView> cams;
  for (const auto& v : views) cams.push_back(v.camera());
  const auto vis = compute_visibility(truth, cams);
  const auto scored = score_gaussians(truth, views, vis);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    CHECK(scored[i].index == int(i));
    CHECK(scored[i].n_views == int(vis[i].size()));
    if (vis[i].empty()) {
      CHECK(scored[i].score == kUnscored);
      continue;
    }
    double sum = 0.0;
    for (const int v : vis[i]) {
      const auto p = project(truth[i].center, views[std::size_t(v)].pose, views[std::size_t(v)].intr);
      const VecX f = bilinear_sample(views[std::size_t(v)].feat, std::clamp(p->u, 0.0, 47.0), std::clamp(p->v, 0.0, 47.0));
      sum += cosine_similarity(truth[i].feature, f);
    }
    CHECK(scored[i].score == doctest::Approx(sum / double(vis[i].size())));
  }
  CHECK_THROWS(score_gaussians(truth, views, {}));
}

TEST_CASE("count-targeted and random landmark sets") {
  std::mt19937_64 rng(4);
  const GaussianScene scene = random_scene(rng, 500, 3);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> s(scene.size());
  for (auto& v : s) v = u(rng);
  const auto scored = scores_from(s);
  const KdTree tree(scene.centers());
  const LandmarkSet a = select_landmarks_count(scene, scored, 40, 8, 5, tree);
  CHECK(a.size() == 40);
  CHECK(std::set<int>(a.indices.begin(), a.indices.end()).size() == 40);
  CHECK(a.indices == select_landmarks_count(scene, scored, 40, 8, 5, tree).indices);
  // Every pick dominates its own neighborhood, so it is a local score maximum of some anchor.
  for (const int i : a.indices) CHECK(s[std::size_t(i)] > -1.0);

  const LandmarkSet r = random_landmarks(scene, 40, 5);
  CHECK(r.size() == 40);
  CHECK(std::set<int>(r.indices.begin(), r.indices.end()).size() == 40);
  CHECK(r.indices == random_landmarks(scene, 40, 5).indices);
}

TEST_CASE("sampler config validation") {
  CHECK_THROWS(SamplerConfig{0, 8, AnchorMode::random, 0}.validate());
  CHECK_THROWS(SamplerConfig{8, 0, AnchorMode::random, 0}.validate());
  CHECK_NOTHROW(SamplerConfig{}.validate());
}
