#include "featloc/matcher.hpp"

#include "featloc/parallel.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace featloc {

void MatcherConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("MatcherConfig: tau must be positive");
  if (!(sparse_min_sim >= 0.0 && sparse_min_sim <= 1.0) || !(mnn_min_prob >= 0.0 && mnn_min_prob <= 1.0))
    throw std::invalid_argument("MatcherConfig: thresholds must lie in [0,1]");
  if (patch != 8) throw std::invalid_argument("MatcherConfig: patch is fixed at 8");
  if (fine_long_side != patch * coarse_long_side)
    throw std::invalid_argument("MatcherConfig: fine_long_side must be 8 x coarse_long_side");
}

std::vector<SparseMatch> match_sparse(std::span<const Keypoint> keypoints, const LandmarkSet& landmarks,
                                      const MatcherConfig& cfg, const Vec2& to_image) {
  if (landmarks.empty()) throw std::invalid_argument("match_sparse: empty landmark set");
  std::vector<SparseMatch> out;
  for (std::size_t k = 0; k < keypoints.size(); ++k) {
    const VecX& f = keypoints[k].feature;
    if (f.size() != landmarks.features.cols()) throw DimensionMismatchError("match_sparse: feature dimension mismatch");
    const double n = f.norm();
    if (n == 0.0) continue;
    const VecX sims = landmarks.features * (f / n);
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < sims.size(); ++j)
      if (sims[j] > sims[best]) best = j;
    if (sims[best] < cfg.sparse_min_sim) continue;
    out.push_back({int(k), int(best), Vec2(keypoints[k].u * to_image.x(), keypoints[k].v * to_image.y()),
                   landmarks.centers[std::size_t(best)], sims[best]});
  }
  return out;
}

Eigen::MatrixXd dual_softmax(const Eigen::MatrixXd& S, double tau) {
  if (S.size() == 0) return S;
  const Eigen::VectorXd row_max = S.rowwise().maxCoeff();
  const Eigen::RowVectorXd col_max = S.colwise().maxCoeff();
  Eigen::MatrixXd row = ((S.colwise() - row_max) / tau).array().exp().matrix();
  const Eigen::VectorXd row_sum = row.rowwise().sum();
  row.array().colwise() /= row_sum.array();
  Eigen::MatrixXd col = ((S.rowwise() - col_max) / tau).array().exp().matrix();
  const Eigen::RowVectorXd col_sum = col.colwise().sum();
  col.array().rowwise() /= col_sum.array();
  return row.cwiseProduct(col);
}

std::vector<MnnPair> mnn(const Eigen::MatrixXd& P, double min_prob) {
  std::vector<MnnPair> out;
  if (P.rows() == 0 || P.cols() == 0) return out;
  // Column-major scans; strict comparisons keep the lowest index on ties.
  std::vector<Eigen::Index> col_best(std::size_t(P.cols()), 0), row_best(std::size_t(P.rows()), 0);
  for (Eigen::Index j = 0; j < P.cols(); ++j) {
    const double* c = P.col(j).data();
    Eigen::Index b = 0;
    for (Eigen::Index i = 1; i < P.rows(); ++i)
      if (c[i] > c[b]) b = i;
    col_best[std::size_t(j)] = b;
    if (j > 0)
      for (Eigen::Index i = 0; i < P.rows(); ++i)
        if (c[i] > P(i, row_best[std::size_t(i)])) row_best[std::size_t(i)] = j;
  }
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    const Eigen::Index j = row_best[std::size_t(i)];
    if (col_best[std::size_t(j)] == i && P(i, j) >= min_prob) out.push_back({int(i), int(j), P(i, j)});
  }
  return out;
}

std::vector<MnnPair> dual_softmax_mnn(const Eigen::MatrixXd& S, double tau, double min_prob) {
  std::vector<MnnPair> out;
  const Eigen::Index n = S.rows(), m = S.cols();
  if (n == 0 || m == 0) return out;
  const Eigen::ArrayXd row_max = S.rowwise().maxCoeff().array();
  Eigen::ArrayXd row_sum = Eigen::ArrayXd::Zero(n);
  Eigen::ArrayXd col_max(m), col_log_sum(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto c = S.col(j).array();
    col_max[j] = c.maxCoeff();
    row_sum += ((c - row_max) / tau).exp();
    col_log_sum[j] = std::log(((c - col_max[j]) / tau).exp().sum());
  }
  // log P(i, j) = (S_ij - row_max_i) / tau - log row_sum_i + (S_ij - col_max_j) / tau - log col_sum_j
  const Eigen::ArrayXd row_off = -row_max / tau - row_sum.log();
  Eigen::ArrayXd best_val = Eigen::ArrayXd::Constant(n, -std::numeric_limits<double>::infinity());
  std::vector<Eigen::Index> row_best(std::size_t(n), 0), col_best(std::size_t(m), 0);
  Eigen::ArrayXd lp(n);
  for (Eigen::Index j = 0; j < m; ++j) {
    lp = 2.0 * S.col(j).array() / tau + row_off - (col_max[j] / tau + col_log_sum[j]);
    Eigen::Index b = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (lp[i] > lp[b]) b = i;
      if (lp[i] > best_val[i]) {
        best_val[i] = lp[i];
        row_best[std::size_t(i)] = j;
      }
    }
    col_best[std::size_t(j)] = b;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = row_best[std::size_t(i)];
    if (col_best[std::size_t(j)] != i) continue;
    const double prob = std::exp(best_val[i]);
    if (prob >= min_prob) out.push_back({int(i), int(j), prob});
  }
  return out;
}

Eigen::MatrixXd coarse_features(const FeatureMap& fm, int patch) {
  const int cw = fm.width / patch, ch = fm.height / patch;
  Eigen::MatrixXd out(Eigen::Index(cw) * ch, fm.channels);
  const double half = 0.5 * (patch - 1);
  for (int i = 0; i < ch; ++i)
    for (int j = 0; j < cw; ++j) {
      const VecX f = bilinear_sample(fm, patch * j + half, patch * i + half);
      const double n = f.norm();
      out.row(Eigen::Index(i) * cw + j) = n > 0.0 ? VecX(f / n) : VecX(VecX::Zero(fm.channels));
    }
  return out;
}

std::vector<bool> valid_render_cells(const Grid2D& acc_alpha, int patch) {
  const int cw = acc_alpha.width / patch, ch = acc_alpha.height / patch;
  std::vector<bool> out(std::size_t(cw) * ch, false);
  for (int i = 0; i < ch; ++i)
    for (int j = 0; j < cw; ++j) {
      int covered = 0;
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x) covered += acc_alpha.at(patch * i + y, patch * j + x) > kValidAlpha;
      out[std::size_t(i) * cw + j] = 2 * covered > patch * patch;
    }
  return out;
}

namespace {

// Unit features of the valid pixels of one patch, with their pixel offsets.
struct PatchFeatures {
  Eigen::MatrixXd features;
  std::vector<Vec2> pixels;
};

PatchFeatures patch_features(const FeatureMap& fm, const Grid2D* acc_alpha, int cx, int cy, int patch) {
  PatchFeatures out;
  std::vector<VecX> rows;
  for (int y = 0; y < patch; ++y)
    for (int x = 0; x < patch; ++x) {
      const int px = cx * patch + x, py = cy * patch + y;
      if (acc_alpha && acc_alpha->at(py, px) <= kValidAlpha) continue;
      const VecX f = fm.pixel(py, px);
      const double n = f.norm();
      if (n == 0.0) continue;
      rows.push_back(f / n);
      out.pixels.emplace_back(px, py);
    }
  out.features.resize(Eigen::Index(rows.size()), fm.channels);
  for (std::size_t r = 0; r < rows.size(); ++r) out.features.row(Eigen::Index(r)) = rows[r];
  return out;
}

}  // namespace

DenseMatches match_dense(const FeatureMap& query_fm, const RenderOutput& rendered, const MatcherConfig& cfg) {
  cfg.validate();
  const FeatureMap& render_fm = rendered.feature;
  if (!query_fm.same_shape(render_fm)) throw DimensionMismatchError("match_dense: query and render maps differ in shape");
  if (std::max(query_fm.width, query_fm.height) != cfg.fine_long_side)
    throw std::invalid_argument("match_dense: maps must have long side fine_long_side");
  const int p = cfg.patch;
  const int cw = query_fm.width / p;

  const Eigen::MatrixXd qc = coarse_features(query_fm, p);
  const Eigen::MatrixXd rc = coarse_features(render_fm, p);
  const std::vector<bool> rvalid = valid_render_cells(rendered.acc_alpha, p);
  std::vector<int> qcells, rcells;
  for (Eigen::Index c = 0; c < qc.rows(); ++c) {
    if (qc.row(c).squaredNorm() > 0.0) qcells.push_back(int(c));
    if (rvalid[std::size_t(c)] && rc.row(c).squaredNorm() > 0.0) rcells.push_back(int(c));
  }
  DenseMatches out;
  if (qcells.empty() || rcells.empty()) return out;

  Eigen::MatrixXd qm(Eigen::Index(qcells.size()), qc.cols()), rm(Eigen::Index(rcells.size()), rc.cols());
  for (std::size_t i = 0; i < qcells.size(); ++i) qm.row(Eigen::Index(i)) = qc.row(qcells[i]);
  for (std::size_t i = 0; i < rcells.size(); ++i) rm.row(Eigen::Index(i)) = rc.row(rcells[i]);
  const Eigen::MatrixXd S = qm * rm.transpose();
  for (const MnnPair& m : dual_softmax_mnn(S, cfg.tau, cfg.mnn_min_prob)) {
    const int q = qcells[std::size_t(m.row)], r = rcells[std::size_t(m.col)];
    out.coarse.push_back({q % cw, q / cw, r % cw, r / cw, m.prob});
  }

  std::vector<std::optional<FineMatch>> fine(out.coarse.size());
  parallel_for(int(out.coarse.size()), [&](int k) {
    const CoarseMatch& c = out.coarse[std::size_t(k)];
    const PatchFeatures qp = patch_features(query_fm, nullptr, c.query_x, c.query_y, p);
    const PatchFeatures rp = patch_features(render_fm, &rendered.acc_alpha, c.render_x, c.render_y, p);
    if (qp.pixels.empty() || rp.pixels.empty()) return;
    const auto pairs = dual_softmax_mnn(qp.features * rp.features.transpose(), cfg.tau, 0.0);
    const MnnPair* best = nullptr;
    for (const MnnPair& m : pairs)
      if (!best || m.prob > best->prob) best = &m;
    if (best) fine[std::size_t(k)] = FineMatch{qp.pixels[std::size_t(best->row)], rp.pixels[std::size_t(best->col)], best->prob, k};
  });
  for (auto& f : fine)
    if (f) out.fine.push_back(*f);
  return out;
}

}  // namespace featloc
