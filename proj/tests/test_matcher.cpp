#include "featloc/matcher.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace featloc;
using namespace featloc::testing;

namespace {

// Plain double loops over row and column softmaxes.
Eigen::MatrixXd ref_dual_softmax(const Eigen::MatrixXd& S, double tau) {
  const Eigen::Index n = S.rows(), m = S.cols();
  Eigen::MatrixXd P(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      double rs = 0.0, cs = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) rs += std::exp((S(i, k) - S(i, j)) / tau);
      for (Eigen::Index k = 0; k < n; ++k) cs += std::exp((S(k, j) - S(i, j)) / tau);
      P(i, j) = 1.0 / (rs * cs);
    }
  return P;
}

std::vector<MnnPair> ref_mnn(const Eigen::MatrixXd& P, double min_prob) {
  std::vector<MnnPair> out;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    Eigen::Index j = 0;
    for (Eigen::Index k = 1; k < P.cols(); ++k)
      if (P(i, k) > P(i, j)) j = k;
    Eigen::Index b = 0;
    for (Eigen::Index k = 1; k < P.rows(); ++k)
      if (P(k, j) > P(b, j)) b = k;
    if (b == i && P(i, j) >= min_prob) out.push_back({int(i), int(j), P(i, j)});
  }
  return out;
}

bool same_pairs(const std::vector<MnnPair>& a, const std::vector<MnnPair>& b, double tol = 1e-12) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].row != b[i].row || a[i].col != b[i].col || std::abs(a[i].prob - b[i].prob) > tol) return false;
  return true;
}

LandmarkSet landmarks_from(const Eigen::MatrixXd& features) {
  LandmarkSet s;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    s.indices.push_back(int(i));
    s.centers.emplace_back(double(i), 0.0, 0.0);
  }
  s.features = features;
  return s;
}

FeatureMap random_unit_map(std::mt19937_64& rng, int d, int h, int w) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureMap fm(d, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const VecX f = random_vector(rng, d).normalized();
      for (int c = 0; c < d; ++c) fm.at(c, y, x) = f[c];
    }
  return fm;
}

MatcherConfig toy_config() {
  MatcherConfig cfg;
  cfg.coarse_long_side = 4;
  cfg.fine_long_side = 32;
  return cfg;
}

}  // namespace

TEST_CASE("dual softmax values") {
  const Eigen::MatrixXd P = dual_softmax(Eigen::MatrixXd::Identity(2, 2), 1.0);
  const double e = std::exp(1.0);
  CHECK(P(0, 0) == doctest::Approx(std::pow(e / (e + 1), 2)));
  CHECK(P(0, 1) == doctest::Approx(std::pow(1 / (e + 1), 2)));
  CHECK(P(0, 0) == doctest::Approx(0.5345).epsilon(1e-4));
  CHECK(P(1, 0) == doctest::Approx(0.0723).epsilon(1e-3));

  const Eigen::MatrixXd C = dual_softmax(Eigen::MatrixXd::Constant(3, 5, 0.7), 0.05);
  for (Eigen::Index i = 0; i < C.size(); ++i) CHECK(C.data()[i] == doctest::Approx(1.0 / 15.0));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 10; ++t) {
    Eigen::MatrixXd S(3 + t, 7 - t / 2);
    for (Eigen::Index i = 0; i < S.size(); ++i) S.data()[i] = u(rng);
    const double tau = 0.05 + 0.1 * t;
    const Eigen::MatrixXd A = dual_softmax(S, tau), B = ref_dual_softmax(S, tau);
    CHECK((A - B).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(A.minCoeff() >= 0.0);
    CHECK(A.maxCoeff() <= 1.0);
  }
  CHECK(dual_softmax(Eigen::MatrixXd(0, 3), 0.1).size() == 0);
}

TEST_CASE("mutual nearest neighbors") {
  Eigen::MatrixXd P(3, 3);
  P << 0.9, 0.05, 0.0, 0.1, 0.6, 0.3, 0.0, 0.7, 0.2;
  // Row 1 prefers column 1 but column 1 prefers row 2.
  const auto pairs = mnn(P, 0.0);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].row == 0);
  CHECK(pairs[0].col == 0);
  CHECK(pairs[1].row == 2);
  CHECK(pairs[1].col == 1);
  CHECK(mnn(P, 0.8).size() == 1);
  CHECK(mnn(Eigen::MatrixXd::Identity(4, 4), 0.5).size() == 4);
  // Ties go to the lowest index.
  const auto tied = mnn(Eigen::MatrixXd::Constant(2, 2, 0.25), 0.0);
  REQUIRE(tied.size() == 1);
  CHECK(tied[0].row == 0);
  CHECK(tied[0].col == 0);
}

TEST_CASE("fused dual softmax MNN equals the two-step version") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 30; ++t) {
    Eigen::MatrixXd S(2 + t % 9, 3 + t % 7);
    for (Eigen::Index i = 0; i < S.size(); ++i) S.data()[i] = u(rng);
    for (const double tau : {0.02, 0.1, 1.0})
      for (const double mp : {0.0, 0.2}) {
        const auto ref = ref_mnn(ref_dual_softmax(S, tau), mp);
        CHECK(same_pairs(dual_softmax_mnn(S, tau, mp), ref, 1e-9));
        CHECK(same_pairs(mnn(dual_softmax(S, tau), mp), ref, 1e-12));
      }
  }
}

TEST_CASE("sparse matching") {
  Eigen::MatrixXd lf = Eigen::MatrixXd::Identity(3, 3);
  const LandmarkSet lm = landmarks_from(lf);
  Keypoint exact{4.0, 5.0, 0.9, VecX::Unit(3, 2) * 3.0};
  // Best similarity 0.07, below the 0.2 floor.
  const Keypoint weak{1.0, 1.0, 0.9, Vec3(-1.0, -1.0, 0.1)};
  const std::vector<Keypoint> kps{exact, weak};
  const auto m = match_sparse(kps, lm, MatcherConfig{}, Vec2(2.0, 3.0));
  REQUIRE(m.size() == 1);
  CHECK(m[0].keypoint == 0);
  CHECK(m[0].landmark == 2);
  CHECK(m[0].similarity == doctest::Approx(1.0));
  CHECK(m[0].pixel.isApprox(Vec2(8.0, 15.0)));
  CHECK(m[0].point.isApprox(Vec3(2, 0, 0)));
  CHECK_THROWS(match_sparse(kps, LandmarkSet{}, MatcherConfig{}));
}

TEST_CASE("sparse matching equals a double loop") {
  std::mt19937_64 rng(3);
  Eigen::MatrixXd lf(200, 8);
  for (Eigen::Index i = 0; i < 200; ++i) lf.row(i) = random_vector(rng, 8).normalized().transpose();
  const LandmarkSet lm = landmarks_from(lf);
  std::vector<Keypoint> kps;
  for (int k = 0; k < 50; ++k) kps.push_back({double(k), 2.0 * k, 0.5, random_vector(rng, 8)});
  MatcherConfig cfg;
  cfg.sparse_min_sim = 0.5;
  const auto got = match_sparse(kps, lm, cfg);
  std::size_t next = 0;
  for (int k = 0; k < 50; ++k) {
    int best = -1;
    double best_sim = -2.0;
    for (int j = 0; j < 200; ++j) {
      double dot = 0.0;
      for (int c = 0; c < 8; ++c) dot += kps[std::size_t(k)].feature[c] * lf(j, c);
      const double sim = dot / kps[std::size_t(k)].feature.norm();
      if (sim > best_sim) best_sim = sim, best = j;
    }
    if (best_sim < 0.5) continue;
    REQUIRE(next < got.size());
    CHECK(got[next].keypoint == k);
    CHECK(got[next].landmark == best);
    CHECK(got[next].similarity == doctest::Approx(best_sim));
    ++next;
  }
  CHECK(next == got.size());

  // Permuting the landmarks permutes the targets.
  std::vector<int> perm(200);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd pf(200, 8);
  for (int j = 0; j < 200; ++j) pf.row(j) = lf.row(perm[std::size_t(j)]);
  const auto permuted = match_sparse(kps, landmarks_from(pf), cfg);
  REQUIRE(permuted.size() == got.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(perm[std::size_t(permuted[i].landmark)] == got[i].landmark);
}

TEST_CASE("coarse cells") {
  FeatureMap fm(2, 16, 24);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 24; ++x) {
      fm.at(0, y, x) = x < 8 ? 1.0 : 0.0;
      fm.at(1, y, x) = x < 8 ? 0.0 : (y < 8 ? 2.0 : 0.0);
    }
  const Eigen::MatrixXd c = coarse_features(fm, 8);
  REQUIRE(c.rows() == 6);
  CHECK(c.row(0).isApprox(Eigen::RowVector2d(1, 0)));
  CHECK(c.row(1).isApprox(Eigen::RowVector2d(0, 1)));
  CHECK(c.row(4).norm() == 0.0);

  Grid2D acc(16, 24, 0.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) acc.at(y, x) = 1.0;
  for (int y = 0; y < 8; ++y)
    for (int x = 8; x < 16; ++x) acc.at(y, x) = y < 4 ? 1.0 : 0.0;  // exactly half
  const auto valid = valid_render_cells(acc, 8);
  CHECK(valid == std::vector<bool>{true, false, false, false, false, false});
}

TEST_CASE("dense matching of a map against itself") {
  std::mt19937_64 rng(4);
  RenderOutput r;
  r.feature = random_unit_map(rng, 6, 24, 32);
  r.acc_alpha = Grid2D(24, 32, 1.0);
  const auto m = match_dense(r.feature, r, toy_config());
  CHECK(m.coarse.size() == 12);
  CHECK(m.fine.size() == 12);
  for (const auto& c : m.coarse) {
    CHECK(c.query_x == c.render_x);
    CHECK(c.query_y == c.render_y);
  }
  for (const auto& f : m.fine) CHECK(f.query == f.render);

  r.acc_alpha = Grid2D(24, 32, 0.0);
  const auto none = match_dense(r.feature, r, toy_config());
  CHECK(none.coarse.empty());
  CHECK(none.fine.empty());
  CHECK_THROWS(match_dense(r.feature, r, MatcherConfig{}));
}

TEST_CASE("dense matching equals an exhaustive reference") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  const MatcherConfig cfg = [] {
    MatcherConfig c = toy_config();
    c.tau = 0.05;
    c.mnn_min_prob = 0.0;
    return c;
  }();
  for (int t = 0; t < 5; ++t) {
    const FeatureMap q = random_unit_map(rng, 3, 24, 32);
    RenderOutput r;
    // Smooth rendered map: the query with a shifted copy blended in.
    r.feature = q;
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 32; ++x) {
        VecX f(3);
        for (int c = 0; c < 3; ++c) f[c] = q.at(c, y, x) + 0.8 * q.at(c, y, (x + 1) % 32);
        f.normalize();
        for (int c = 0; c < 3; ++c) r.feature.at(c, y, x) = f[c];
      }
    r.acc_alpha = Grid2D(24, 32, 1.0);
    for (auto& a : r.acc_alpha.data) a = u(rng) < 0.3 ? 0.0 : 1.0;

    // Coarse cells: sample at the cell center, renormalize.
    auto cell = [](const FeatureMap& fm, int cx, int cy) { return normalized(bilinear_sample(fm, cx * 8 + 3.5, cy * 8 + 3.5)); };
    std::vector<std::pair<int, int>> rc;
    for (int cy = 0; cy < 3; ++cy)
      for (int cx = 0; cx < 4; ++cx) {
        int cov = 0;
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) cov += r.acc_alpha.at(cy * 8 + y, cx * 8 + x) > kValidAlpha;
        if (cov > 32) rc.emplace_back(cx, cy);
      }
    Eigen::MatrixXd S(12, Eigen::Index(rc.size()));
    for (int i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < rc.size(); ++j)
        S(i, Eigen::Index(j)) = cell(q, i % 4, i / 4).dot(cell(r.feature, rc[j].first, rc[j].second));
    const auto coarse = ref_mnn(ref_dual_softmax(S, cfg.tau), cfg.mnn_min_prob);

    const auto got = match_dense(q, r, cfg);
    REQUIRE(got.coarse.size() == coarse.size());
    std::size_t fi = 0;
    for (std::size_t k = 0; k < coarse.size(); ++k) {
      const int qx = coarse[k].row % 4, qy = coarse[k].row / 4;
      const auto [rx, ry] = rc[std::size_t(coarse[k].col)];
      CHECK(got.coarse[k].query_x == qx);
      CHECK(got.coarse[k].query_y == qy);
      CHECK(got.coarse[k].render_x == rx);
      CHECK(got.coarse[k].render_y == ry);
      CHECK(got.coarse[k].prob == doctest::Approx(coarse[k].prob));

      std::vector<Vec2> qp, rp;
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          qp.emplace_back(qx * 8 + x, qy * 8 + y);
          if (r.acc_alpha.at(ry * 8 + y, rx * 8 + x) > kValidAlpha) rp.emplace_back(rx * 8 + x, ry * 8 + y);
        }
      Eigen::MatrixXd F(Eigen::Index(qp.size()), Eigen::Index(rp.size()));
      for (std::size_t a = 0; a < qp.size(); ++a)
        for (std::size_t b = 0; b < rp.size(); ++b)
          F(Eigen::Index(a), Eigen::Index(b)) = q.pixel(int(qp[a].y()), int(qp[a].x())).dot(r.feature.pixel(int(rp[b].y()), int(rp[b].x())));
      const auto fine = ref_mnn(ref_dual_softmax(F, cfg.tau), 0.0);
      if (fine.empty()) continue;
      const MnnPair* best = &fine[0];
      for (const auto& p : fine)
        if (p.prob > best->prob) best = &p;
      REQUIRE(fi < got.fine.size());
      CHECK(got.fine[fi].coarse == int(k));
      CHECK(got.fine[fi].query == qp[std::size_t(best->row)]);
      CHECK(got.fine[fi].render == rp[std::size_t(best->col)]);
      CHECK(got.fine[fi].prob == doctest::Approx(best->prob));
      ++fi;
    }
    CHECK(fi == got.fine.size());
  }
}

TEST_CASE("matcher config validation") {
  CHECK_NOTHROW(MatcherConfig{}.validate());
  MatcherConfig c;
  c.tau = 0.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.fine_long_side = 600;
  CHECK_THROWS(c.validate());
  c = {};
  c.mnn_min_prob = 1.5;
  CHECK_THROWS(c.validate());
}
