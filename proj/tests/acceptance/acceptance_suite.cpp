// Acceptance criteria runner: one PASS/FAIL line per criterion.
#include "featloc/bench.hpp"
#include "featloc/evaluate.hpp"
#include "featloc/kdtree.hpp"
#include "featloc/matcher.hpp"
#include "featloc/pose_estimator.hpp"
#include "featloc/rasterizer.hpp"

#include "../support.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace featloc;
using namespace featloc::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<RenderOutput> oracle_renders;

Outcome rasterizer_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> count(1, 500);
  const CameraIntrinsics intr = square_camera(64);
  double worst = 0.0;
  oracle_renders.clear();
  for (int s = 0; s < 50; ++s) {
    const GaussianScene scene = random_scene(rng, count(rng), 8);
    const SE3Pose pose = random_orbit_pose(rng, 3.5);
    const RenderOutput fast = render(scene, pose, intr);
    const RenderOutput ref = render_reference(scene, pose, intr);
    worst = std::max({worst, max_abs_diff(fast.color.data, ref.color.data),
                      max_abs_diff(fast.feature.data, ref.feature.data), max_abs_diff(fast.depth.data, ref.depth.data),
                      max_abs_diff(fast.acc_alpha.data, ref.acc_alpha.data)});
    oracle_renders.push_back(fast);
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 120.0,
          "max |render - reference| " + fmt("%.3g", worst) + " (< 1e-5), " + fmt("%.1f", secs) + " s (< 120 s)"};
}

Outcome feature_normalization() {
  // Renders from the oracle check plus the synthetic scene at two resolutions.
  std::vector<RenderOutput> maps = oracle_renders;
  SyntheticConfig sc;
  sc.n_query_views = 2;
  const GaussianScene scene = synthesize_scene(sc);
  const CameraIntrinsics intr = synthetic_intrinsics(sc);
  std::mt19937_64 rng(7);
  for (int i = 0; i < 4; ++i) {
    const SE3Pose pose = random_orbit_pose(rng, 3.75);
    maps.push_back(render(scene, pose, intr));
    maps.push_back(render(scene, pose, intr.scaled_to(640, 480)));
  }
  long covered = 0, good = 0;
  double worst = 0.0;
  for (const auto& r : maps)
    for (int y = 0; y < r.feature.height; ++y)
      for (int x = 0; x < r.feature.width; ++x) {
        if (r.acc_alpha.at(y, x) <= 1e-3) continue;
        ++covered;
        const double dev = std::abs(r.feature.pixel(y, x).norm() - 1.0);
        worst = std::max(worst, dev);
        good += dev <= 1e-5;
      }
  const double frac = covered ? double(good) / double(covered) : 0.0;
  return {covered > 0 && good == covered, std::to_string(covered) + " covered pixels over " +
                                              std::to_string(maps.size()) + " maps, within 1e-5: " +
                                              fmt("%.6f", frac) + ", max deviation " + fmt("%.3g", worst)};
}

Outcome field_gradient() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  const CameraIntrinsics intr = square_camera(32);
  TrainConfig cfg;
  double worst = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 3; ++trial) {
    const GaussianScene truth = random_scene(rng, 50, 6, 1.0, 0.1, 0.35);
    const TrainView view = render_view(truth, random_orbit_pose(rng, 3.0), intr, 1 + trial % 2);
    GaussianScene scene = reset_appearance(truth, 10 + trial);
    const AttributeGradients g = grad_attributes(view, scene, cfg);
    std::vector<double> analytic, numeric;
    const double h = 1e-6;
    for (std::size_t i = 0; i < scene.size(); ++i) {
      for (int c = 0; c < 3; ++c) {
        const Vec3 orig = scene[i].color;
        Vec3 p = orig;
        p[c] += h;
        scene.set_color(i, p);
        const double lp = total_loss(view, scene, cfg);
        p[c] = orig[c] - h;
        scene.set_color(i, p);
        const double lm = total_loss(view, scene, cfg);
        scene.set_color(i, orig);
        analytic.push_back(g.color[i][c]);
        numeric.push_back((lp - lm) / (2 * h));
      }
      for (int c = 0; c < scene.feature_dim(); ++c) {
        const VecX orig = scene[i].feature;
        VecX p = orig;
        p[c] += h;
        scene.set_feature(i, p);
        const double lp = total_loss(view, scene, cfg);
        p[c] = orig[c] - h;
        scene.set_feature(i, p);
        const double lm = total_loss(view, scene, cfg);
        scene.set_feature(i, orig);
        analytic.push_back(g.feature[i][c]);
        numeric.push_back((lp - lm) / (2 * h));
      }
    }
    double diff = 0.0, ref = 0.0;
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      diff += (analytic[k] - numeric[k]) * (analytic[k] - numeric[k]);
      ref += std::max(analytic[k] * analytic[k], numeric[k] * numeric[k]);
    }
    worst = std::max(worst, std::sqrt(diff / std::max(ref, 1e-300)));
    checked += int(analytic.size());
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0, std::to_string(checked) + " partials, relative error " + fmt("%.3g", worst) +
                                           " (< 1e-4), " + fmt("%.1f", secs) + " s (< 60 s)"};
}

Outcome field_recovery() {
  const auto t0 = Clock::now();
  SyntheticConfig sc;
  sc.seed = 3;
  sc.n_gaussians = 200;
  sc.feature_noise_sigma = 0.0;
  sc.n_query_views = 1;
  sc.min_visible_fraction = 0.0;
  const SyntheticDataset ds = generate_synthetic(sc);
  TrainConfig cfg;
  cfg.steps = 500;
  cfg.lr_feature = 0.02;
  cfg.lr_color = 0.02;
  cfg.lr_final_ratio = 0.1;
  const FitResult fit = fit_field(reset_appearance(ds.scene, sc.seed), ds.train, cfg);
  double loss = 0.0;
  for (const auto& v : ds.train) loss += total_loss(v, fit.scene, cfg);
  loss /= double(ds.train.size());

  std::vector<CameraView> cams;
  for (const auto& v : ds.train) cams.push_back(v.camera());
  const auto vis = compute_visibility(ds.scene, cams);
  double cos_sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < ds.scene.size(); ++i) {
    if (vis[i].size() < 3) continue;
    cos_sum += cosine_similarity(fit.scene[i].feature, ds.scene[i].feature);
    ++n;
  }
  const double mean_cos = n ? cos_sum / n : 0.0;
  const double secs = seconds_since(t0);
  return {loss < 1e-3 && mean_cos > 0.99 && secs < 300.0,
          "mean total loss " + fmt("%.3g", loss) + " (< 1e-3), mean cosine " + fmt("%.4f", mean_cos) + " over " +
              std::to_string(n) + " Gaussians (> 0.99), " + fmt("%.1f", secs) + " s (< 300 s)"};
}

std::vector<int> brute_force_selection(const std::vector<Vec3>& pts, const std::vector<double>& score,
                                       const std::vector<int>& anchors, int k) {
  std::vector<int> out;
  std::set<int> seen;
  for (const int a : anchors) {
    std::vector<std::pair<double, int>> order;
    for (std::size_t i = 0; i < pts.size(); ++i) order.emplace_back((pts[i] - pts[a]).squaredNorm(), int(i));
    std::sort(order.begin(), order.end());
    int best = -1;
    for (int r = 0; r < k; ++r) {
      const int c = order[std::size_t(r)].second;
      if (std::isinf(score[c])) continue;
      if (best < 0 || score[c] > score[best] || (score[c] == score[best] && c < best)) best = c;
    }
    if (best >= 0 && seen.insert(best).second) out.push_back(best);
  }
  return out;
}

Outcome sampling_correctness() {
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int instances = 0, equal = 0, k1_ok = 0, k1_total = 0;
  long dominance_violations = 0;
  for (int trial = 0; trial < 3; ++trial) {
    const GaussianScene scene = random_scene(rng, 1000, 4);
    std::vector<ScoredGaussian> scored(scene.size());
    std::vector<double> score(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
      // A few unscored Gaussians and repeated scores exercise both tie rules.
      const double s = trial == 2 ? std::round(u(rng) * 4) / 4 : u(rng);
      score[i] = (i % 37 == 5 && trial > 0) ? kUnscored : s;
      scored[i] = {int(i), score[i], std::isinf(score[i]) ? 0 : 3};
    }
    const auto pts = scene.centers();
    const KdTree index(pts);
    for (const int k : {1, 8, 32}) {
      SamplerConfig cfg{200, k, trial == 1 ? AnchorMode::fps : AnchorMode::random, std::uint64_t(trial)};
      const auto anchors = sample_anchors(scene, cfg);
      const LandmarkSet got = select_landmarks(scene, scored, anchors, cfg, index);
      ++instances;
      equal += got.indices == brute_force_selection(pts, score, anchors, k);
      const auto picks = select_per_anchor(scored, anchors, k, index);
      for (std::size_t a = 0; a < anchors.size(); ++a) {
        if (picks[a] < 0) continue;
        for (const int nb : index.knn(pts[std::size_t(anchors[a])], k))
          dominance_violations += score[std::size_t(nb)] > score[std::size_t(picks[a])];
      }
      if (k == 1) {
        std::vector<int> expected;
        for (const int a : anchors)
          if (!std::isinf(score[std::size_t(a)])) expected.push_back(a);
        ++k1_total;
        k1_ok += got.indices == expected;
      }
    }
  }
  return {equal == instances && k1_ok == k1_total && dominance_violations == 0,
          std::to_string(equal) + "/" + std::to_string(instances) + " instances equal brute force, k=1 anchor sets " +
              std::to_string(k1_ok) + "/" + std::to_string(k1_total) + ", dominance violations " +
              std::to_string(dominance_violations)};
}

Outcome sampling_ablation() {
  const auto t0 = Clock::now();
  BenchConfig cfg;
  cfg.n_scenes = 5;
  cfg.fit_field = false;
  cfg.sweep_counts = {128, 256, 512};
  std::map<std::pair<int, Selection>, std::pair<double, int>> pooled;  // recall sum weighted by queries
  for (int s = 0; s < cfg.n_scenes; ++s) {
    const SceneAssets assets = prepare_scene(cfg, s);
    for (const auto& row : landmark_sweep(assets, cfg)) {
      auto& p = pooled[{row.target, row.selection}];
      p.first += row.sparse_recall * double(assets.data.queries.size());
      p.second += int(assets.data.queries.size());
    }
  }
  bool ordered = true;
  std::string detail;
  double at512 = 0.0;
  for (const int c : cfg.sweep_counts) {
    const auto& mo = pooled[{c, Selection::matching_oriented}];
    const auto& rnd = pooled[{c, Selection::random}];
    const double rm = mo.first / mo.second, rr = rnd.first / rnd.second;
    ordered = ordered && rm >= rr;
    if (c == 512) at512 = rm;
    detail += std::to_string(c) + ": " + fmt("%.3f", rm) + " vs " + fmt("%.3f", rr) + "; ";
  }
  const double secs = seconds_since(t0);
  return {ordered && at512 >= 0.9 && secs < 900.0,
          "sparse recall matching-oriented vs random " + detail + "at 512 " + fmt("%.3f", at512) + " (>= 0.9), " +
              fmt("%.0f", secs) + " s (< 900 s)"};
}

double detector_relative_gradient_error(const DetectorParams& params, const FeatureMap& fm, const BinaryGrid& gt,
                                        double h) {
  DetectorGradients g;
  detector_loss_and_gradient(params, fm, gt, g);
  DetectorParams p = params;
  double diff = 0.0, ref = 0.0;
  auto check = [&](double& slot, double analytic) {
    const double orig = slot;
    slot = orig + h;
    const double lp = bce_loss(forward(p, fm), gt);
    slot = orig - h;
    const double lm = bce_loss(forward(p, fm), gt);
    slot = orig;
    const double num = (lp - lm) / (2 * h);
    diff += (num - analytic) * (num - analytic);
    ref += std::max(num * num, analytic * analytic);
  };
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) check(layer.weight(r, c), g.weight[l](r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) check(layer.bias[r], g.bias[l][r]);
  }
  return std::sqrt(diff / std::max(ref, 1e-300));
}

Outcome detector_training() {
  // Gradient checks on toy sizes.
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double grad_err = 0.0;
  for (const auto& [hidden, size] : std::vector<std::pair<std::vector<int>, int>>{{{}, 4}, {{5, 4}, 6}}) {
    FeatureMap fm(3, size, size);
    for (auto& v : fm.data) v = u(rng);
    BinaryGrid gt(size, size);
    gt.at(1, 2) = gt.at(size - 2, size - 1) = 1;
    const DetectorParams p = DetectorParams::create(3, hidden, 17);
    grad_err = std::max(grad_err, detector_relative_gradient_error(p, fm, gt, 1e-3));
  }

  BenchConfig cfg;
  cfg.fit_field = false;
  const SceneAssets assets = prepare_scene(cfg, 0);
  const LandmarkSet lm = sample_landmarks(assets, cfg.sampler, cfg.selection);
  const DetectorParams det = train_scene_detector(assets, lm, cfg.detector_hidden, cfg.detector);
  const LocalizeConfig lc;
  long gt_total = 0, gt_hit = 0;
  long kp_zero = 0, kp_covered = 0, tex_zero = 0, tex_covered = 0;
  for (const auto& q : assets.data.queries) {
    const auto kps = extract_keypoints(forward(det, q.feat), q.feat, lc.nms_radius, lc.max_keypoints,
                                       lc.min_keypoint_score);
    const BinaryGrid gt = build_gt_heatmap(lm, assets.model, {q.pose, q.intr}, q.feat.width, q.feat.height);
    for (int y = 0; y < gt.height; ++y)
      for (int x = 0; x < gt.width; ++x) {
        if (!gt.at(y, x)) continue;
        ++gt_total;
        gt_hit += std::any_of(kps.begin(), kps.end(), [&](const Keypoint& k) {
          return (k.u - x) * (k.u - x) + (k.v - y) * (k.v - y) <= 4.0;
        });
      }
    const Grid2D alpha = render(assets.model, q.pose, q.intr.scaled_to(q.feat.width, q.feat.height)).acc_alpha;
    for (double a : alpha.data) (a == 0.0 ? tex_zero : tex_covered)++;
    for (const auto& k : kps) (alpha.at(int(k.v), int(k.u)) == 0.0 ? kp_zero : kp_covered)++;
  }
  const double rec = gt_total ? double(gt_hit) / double(gt_total) : 0.0;
  const double d_zero = tex_zero ? double(kp_zero) / double(tex_zero) : 0.0;
  const double d_cov = tex_covered ? double(kp_covered) / double(tex_covered) : 0.0;
  const double ratio = d_cov > 0.0 ? d_zero / d_cov : INFINITY;
  return {grad_err < 1e-3 && rec >= 0.7 && tex_zero > 0 && ratio < 0.1,
          "gradient error " + fmt("%.3g", grad_err) + " (< 1e-3), landmark texels with a keypoint within 2: " +
              fmt("%.3f", rec) + " of " + std::to_string(gt_total) + " (>= 0.7), empty/covered density ratio " +
              fmt("%.4f", ratio) + " (< 0.1)"};
}

Outcome dual_softmax_mnn_checks() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> dim(2, 40);
  bool range_ok = true, bound_ok = true, bijective = true;
  int limit_equal = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = dim(rng), m = dim(rng);
    Eigen::MatrixXd S(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) S(i, j) = u(rng);
    const Eigen::MatrixXd P = dual_softmax(S, 0.1);
    // Independent row and column softmax factors.
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        double rs = 0.0, cs = 0.0;
        for (int jj = 0; jj < m; ++jj) rs += std::exp((S(i, jj) - S(i, j)) / 0.1);
        for (int ii = 0; ii < n; ++ii) cs += std::exp((S(ii, j) - S(i, j)) / 0.1);
        range_ok = range_ok && P(i, j) >= 0.0 && P(i, j) <= 1.0;
        bound_ok = bound_ok && P(i, j) <= 1.0 / rs + 1e-15 && P(i, j) <= 1.0 / cs + 1e-15;
      }
    const auto pairs = mnn(P, 0.0);
    std::set<int> rows, cols;
    for (const auto& p : pairs) bijective = bijective && rows.insert(p.row).second && cols.insert(p.col).second;

    // Distinct entries on a 0.01 grid keep every gap at least 10 tau.
    std::vector<int> ranks(std::size_t(n) * m);
    std::iota(ranks.begin(), ranks.end(), 0);
    std::shuffle(ranks.begin(), ranks.end(), rng);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) S(i, j) = 0.01 * ranks[std::size_t(i) * m + j];
    std::set<std::pair<int, int>> direct;
    for (int i = 0; i < n; ++i) {
      Eigen::Index j;
      S.row(i).maxCoeff(&j);
      Eigen::Index i2;
      S.col(j).maxCoeff(&i2);
      if (i2 == i) direct.insert({i, int(j)});
    }
    std::set<std::pair<int, int>> limit;
    for (const auto& p : mnn(dual_softmax(S, 1e-3), MatcherConfig{}.mnn_min_prob)) limit.insert({p.row, p.col});
    limit_equal += limit == direct;
  }
  const Eigen::MatrixXd P2 = dual_softmax(Eigen::MatrixXd::Identity(2, 2), 1.0);
  const double e = std::exp(1.0);
  const double diag = std::pow(e / (e + 1.0), 2), off = std::pow(1.0 / (e + 1.0), 2);
  const double dev = std::max({std::abs(P2(0, 0) - diag), std::abs(P2(1, 1) - diag), std::abs(P2(0, 1) - off),
                               std::abs(P2(1, 0) - off), std::abs(P2(0, 0) - 0.5345), std::abs(P2(0, 1) - 0.0723)});
  return {range_ok && bound_ok && bijective && limit_equal == 100 && dev < 1e-4,
          std::string("range ") + (range_ok ? "ok" : "violated") + ", product bound " + (bound_ok ? "ok" : "violated") +
              ", bijective " + (bijective ? "yes" : "no") + ", tau=1e-3 equals mutual argmax (gaps >= 10 tau) " +
              std::to_string(limit_equal) + "/100, 2x2 identity " + fmt("%.4f", P2(0, 0)) + "/" +
              fmt("%.4f", P2(0, 1)) + " (deviation " + fmt("%.2g", dev) + ")"};
}

struct PnpInstance {
  std::vector<Correspondence> corr;
  SE3Pose pose;
  CameraIntrinsics intr;
  double diameter = 0.0;
};

PnpInstance make_pnp_instance(std::uint64_t seed, int n, double outlier_fraction, double noise_px) {
  std::mt19937_64 rng(seed);
  PnpInstance inst;
  inst.intr = {500.0, 500.0, 319.5, 239.5, 640, 480};
  inst.pose = {random_rotation(rng), Vec3::Zero()};
  std::uniform_real_distribution<double> px(0.0, 639.0), py(0.0, 479.0), depth(2.0, 6.0);
  std::normal_distribution<double> noise(0.0, noise_px);
  inst.pose.translation = random_vector(rng, 3) * 0.5;
  AlignedBox box{Vec3::Constant(INFINITY), Vec3::Constant(-INFINITY)};
  const int n_out = int(std::lround(outlier_fraction * n));
  for (int i = 0; i < n; ++i) {
    const double u = px(rng), v = py(rng);
    const Vec3 X = backproject(u, v, depth(rng), inst.pose, inst.intr);
    box.min = box.min.cwiseMin(X);
    box.max = box.max.cwiseMax(X);
    Vec2 pixel(u, v);
    if (i < n_out)
      pixel = Vec2(px(rng), py(rng));
    else if (noise_px > 0.0)
      pixel += Vec2(noise(rng), noise(rng));
    inst.corr.push_back({pixel, X});
  }
  std::shuffle(inst.corr.begin(), inst.corr.end(), rng);
  inst.diameter = box.diameter();
  return inst;
}

Outcome pose_estimation() {
  const auto t0 = Clock::now();
  double exact_worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto inst = make_pnp_instance(s, 50, 0.0, 0.0);
    RansacConfig rc;
    rc.seed = s;
    const auto est = ransac_pnp(inst.corr, inst.intr, rc);
    if (!est) {
      exact_worst = INFINITY;
      continue;
    }
    exact_worst = std::max({exact_worst, translation_error(est->pose, inst.pose),
                            rotation_error_deg(est->pose, inst.pose) * std::numbers::pi / 180.0});
  }
  int good = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto inst = make_pnp_instance(1000 + s, 100, 0.4, 0.5);
    RansacConfig rc;
    rc.seed = s;
    const auto est = ransac_pnp(inst.corr, inst.intr, rc);
    good += est && rotation_error_deg(est->pose, inst.pose) < 0.5 &&
            translation_error(est->pose, inst.pose) < 0.01 * inst.diameter;
  }
  const double secs = seconds_since(t0);
  return {exact_worst < 1e-6 && good >= 95 && secs < 120.0,
          "noise-free worst error " + fmt("%.3g", exact_worst) + " (< 1e-6), outlier trials within bounds " +
              std::to_string(good) + "/100 (>= 95), " + fmt("%.1f", secs) + " s (< 120 s)"};
}

struct BenchRun {
  std::string csv, json;
  BenchResult result;
  double seconds = 0.0;
};

std::optional<BenchRun> first_bench;

BenchRun run_full_bench() {
  const auto t0 = Clock::now();
  BenchRun run;
  run.result = run_bench(BenchConfig{});
  run.csv = report_csv(run.result.report);
  run.json = bench_json(run.result).dump(2);
  run.seconds = seconds_since(t0);
  return run;
}

Outcome end_to_end() {
  first_bench = run_full_bench();
  const auto& res = first_bench->result;
  const double diam_frac = [&] {
    std::vector<double> rel;
    for (const auto& q : res.report.queries) rel.push_back(q.translation_error / q.scene_diameter);
    return median(rel);
  }();
  bool dense_better = true;
  int worse_scenes = 0;
  for (const auto& s : res.per_scene) {
    const bool ok = s.median_translation_error <= s.median_sparse_translation_error &&
                    s.median_rotation_error_deg <= s.median_sparse_rotation_error_deg;
    dense_better = dense_better && ok;
    worse_scenes += !ok;
  }
  const auto& rep = res.report;
  return {rep.ok_fraction >= 0.95 && diam_frac < 0.005 && rep.median_rotation_error_deg < 0.2 && dense_better &&
              res.per_scene.size() == 10 && rep.queries.size() == 200 && first_bench->seconds < 1800.0,
          std::to_string(res.per_scene.size()) + " scenes x " +
              std::to_string(rep.queries.size() / std::max<std::size_t>(1, res.per_scene.size())) +
              " queries, ok " + fmt("%.3f", rep.ok_fraction) + " (>= 0.95), median translation " +
              fmt("%.5f", diam_frac) + " of diameter (< 0.005), median rotation " +
              fmt("%.3f", rep.median_rotation_error_deg) + " deg (< 0.2), scenes where dense is worse " +
              std::to_string(worse_scenes) + " (0), " + fmt("%.0f", first_bench->seconds) + " s (< 1800 s)"};
}

Outcome determinism() {
  if (!first_bench) first_bench = run_full_bench();
  const BenchRun second = run_full_bench();
  const bool csv_same = second.csv == first_bench->csv;
  const bool json_same = second.json == first_bench->json;
  return {csv_same && json_same, std::string("CSV ") + (csv_same ? "identical" : "differs") + " (" +
                                     std::to_string(second.csv.size()) + " bytes), JSON " +
                                     (json_same ? "identical" : "differs") + " (" +
                                     std::to_string(second.json.size()) + " bytes)"};
}

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Criterion numbers to run (default: all)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria{
      {1, "rasterizer oracle equivalence", rasterizer_equivalence},
      {2, "feature normalization", feature_normalization},
      {3, "field gradient check", field_gradient},
      {4, "field recovery", field_recovery},
      {5, "sampling correctness", sampling_correctness},
      {6, "sampling ablation trend", sampling_ablation},
      {7, "detector training", detector_training},
      {8, "dual-softmax and MNN", dual_softmax_mnn_checks},
      {9, "pose estimation", pose_estimation},
      {10, "end-to-end sparse-to-dense", end_to_end},
      {11, "determinism", determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] A%-2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
