#include "featloc/pose_estimator.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

namespace featloc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kP3PTolerancePx = 1e-6;

using Poly = std::vector<double>;  // coefficients, lowest degree first

Poly mul(const Poly& a, const Poly& b) {
  Poly out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

Poly add(const Poly& a, const Poly& b, double sb = 1.0) {
  Poly out(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) out[i] += sb * b[i];
  return out;
}

double eval(const Poly& p, double x) {
  double y = 0.0;
  for (std::size_t i = p.size(); i-- > 0;) y = y * x + p[i];
  return y;
}

double eval_derivative(const Poly& p, double x) {
  double y = 0.0;
  for (std::size_t i = p.size(); i-- > 1;) y = y * x + double(i) * p[i];
  return y;
}

// Real roots via companion-matrix eigenvalues, then Newton polish.
std::vector<double> real_roots(Poly p) {
  while (!p.empty() && std::abs(p.back()) < 1e-14 * (1.0 + std::abs(p.front()))) p.pop_back();
  std::vector<double> roots;
  const int deg = int(p.size()) - 1;
  if (deg < 1) return roots;
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 1; i < deg; ++i) C(i, i - 1) = 1.0;
  for (int i = 0; i < deg; ++i) C(i, deg - 1) = -p[std::size_t(i)] / p.back();
  const Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
  for (int i = 0; i < deg; ++i) {
    const std::complex<double> z = es.eigenvalues()[i];
    if (std::abs(z.imag()) > 1e-9 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 8; ++it) {
      const double d = eval_derivative(p, x);
      if (d == 0.0) break;
      const double nx = x - eval(p, x) / d;
      if (!std::isfinite(nx) || std::abs(eval(p, nx)) >= std::abs(eval(p, x))) break;
      x = nx;
    }
    roots.push_back(x);
  }
  return roots;
}

// Rigid transform mapping world points onto camera points (least squares).
SE3Pose align(const std::array<Vec3, 3>& world, const std::array<Vec3, 3>& cam) {
  Vec3 mw = Vec3::Zero(), mc = Vec3::Zero();
  for (int i = 0; i < 3; ++i) {
    mw += world[i] / 3.0;
    mc += cam[i] / 3.0;
  }
  Mat3 H = Mat3::Zero();
  for (int i = 0; i < 3; ++i) H += (world[i] - mw) * (cam[i] - mc).transpose();
  const Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  D(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Mat3 R = svd.matrixV() * D * svd.matrixU().transpose();
  return SE3Pose::from_matrix(R, mc - R * mw);
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

double cost(const SE3Pose& pose, std::span<const Correspondence> cs, const CameraIntrinsics& intr) {
  double sum = 0.0;
  for (const auto& c : cs) {
    const double e = reprojection_error(pose, c, intr);
    if (!std::isfinite(e)) return kInf;
    sum += e * e;
  }
  return sum;
}

}  // namespace

void RansacConfig::validate() const {
  if (max_iters < 1) throw std::invalid_argument("RansacConfig: max_iters must be >= 1");
  if (!(reproj_threshold_px > 0.0)) throw std::invalid_argument("RansacConfig: threshold must be positive");
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("RansacConfig: confidence must be in (0,1)");
}

double reprojection_error(const SE3Pose& pose, const Correspondence& c, const CameraIntrinsics& intr) {
  const auto p = project(c.point, pose, intr);
  if (!p) return kInf;
  return std::hypot(p->u - c.pixel.x(), p->v - c.pixel.y());
}

double reprojection_rms(const SE3Pose& pose, std::span<const Correspondence> cs, const CameraIntrinsics& intr) {
  if (cs.empty()) return 0.0;
  return std::sqrt(cost(pose, cs, intr) / double(cs.size()));
}

P3PResult p3p_solve(std::span<const Correspondence> c, const CameraIntrinsics& intr) {
  if (c.size() != 3) throw std::invalid_argument("p3p_solve: exactly 3 correspondences required");
  P3PResult out;
  const Vec3 &X1 = c[0].point, &X2 = c[1].point, &X3 = c[2].point;
  const double extent = std::max({(X2 - X1).norm(), (X3 - X1).norm(), (X3 - X2).norm()});
  if (extent == 0.0 || (X2 - X1).cross(X3 - X1).norm() <= 1e-10 * extent * extent) {
    out.degenerate = true;
    return out;
  }
  std::array<Vec3, 3> f;
  for (int i = 0; i < 3; ++i)
    f[i] = Vec3((c[i].pixel.x() - intr.cx) / intr.fx, (c[i].pixel.y() - intr.cy) / intr.fy, 1.0).normalized();
  const double ca = f[1].dot(f[2]), cb = f[0].dot(f[2]), cg = f[0].dot(f[1]);
  const double a2 = (X2 - X3).squaredNorm(), b2 = (X1 - X3).squaredNorm(), c2 = (X1 - X2).squaredNorm();

  // Distances s1, s2 = u s1, s3 = v s1. With Q(v) = 1 + v^2 - 2 v cb, the two
  // law-of-cosines ratios give u = N(v) / Dn(v), and substituting back leaves
  // N^2 - 2 cg N Dn + (1 - c2/b2 Q) Dn^2 = 0, a quartic in v.
  const double K = (a2 - c2) / b2;
  const Poly Q{1.0, -2.0 * cb, 1.0};
  const Poly N{1.0 + K, -2.0 * K * cb, K - 1.0};
  const Poly Dn{2.0 * cg, -2.0 * ca};
  const Poly quartic =
      add(add(mul(N, N), mul(N, Dn), -2.0 * cg), mul(add(Poly{1.0}, Q, -c2 / b2), mul(Dn, Dn)));

  for (const double v : real_roots(quartic)) {
    const double dn = eval(Dn, v);
    if (v <= 0.0 || std::abs(dn) < 1e-12) continue;
    const double u = eval(N, v) / dn;
    const double q = eval(Q, v);
    if (u <= 0.0 || q <= 0.0) continue;
    Vec3 s;
    s[0] = std::sqrt(b2 / q);
    s[1] = u * s[0];
    s[2] = v * s[0];
    // Newton on the three law-of-cosines equations.
    auto residual = [&](const Vec3& d) {
      return Vec3(d[0] * d[0] + d[1] * d[1] - 2 * d[0] * d[1] * cg - c2,
                  d[0] * d[0] + d[2] * d[2] - 2 * d[0] * d[2] * cb - b2,
                  d[1] * d[1] + d[2] * d[2] - 2 * d[1] * d[2] * ca - a2);
    };
    for (int it = 0; it < 5; ++it) {
      const Vec3 r = residual(s);
      Mat3 J;
      J << 2 * s[0] - 2 * s[1] * cg, 2 * s[1] - 2 * s[0] * cg, 0,
           2 * s[0] - 2 * s[2] * cb, 0, 2 * s[2] - 2 * s[0] * cb,
           0, 2 * s[1] - 2 * s[2] * ca, 2 * s[2] - 2 * s[1] * ca;
      const Eigen::FullPivLU<Mat3> lu(J);
      if (!lu.isInvertible()) break;
      const Vec3 ns = s - lu.solve(r);
      if (!ns.allFinite() || residual(ns).norm() >= r.norm()) break;
      s = ns;
    }
    const SE3Pose pose = align({X1, X2, X3}, {s[0] * f[0], s[1] * f[1], s[2] * f[2]});
    bool ok = true;
    for (int i = 0; i < 3 && ok; ++i) ok = reprojection_error(pose, c[std::size_t(i)], intr) < kP3PTolerancePx;
    if (ok) out.poses.push_back(pose);
  }
  if (out.poses.size() > 4) out.poses.resize(4);
  return out;
}

RefineResult refine_pose_ex(const SE3Pose& pose, std::span<const Correspondence> inliers,
                            const CameraIntrinsics& intr) {
  RefineResult res{pose, 0, false};
  double current = cost(pose, inliers, intr);
  if (inliers.size() < 4 || !std::isfinite(current)) return res;
  double lambda = 1e-3;
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  using Vec6 = Eigen::Matrix<double, 6, 1>;
  for (int it = 0; it < 100; ++it) {
    res.iterations = it + 1;
    const Mat3 R = res.pose.rotation_matrix();
    Mat6 H = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (const auto& c : inliers) {
      const Vec3 P = res.pose.transform(c.point);
      const double iz = 1.0 / P.z();
      const Vec2 r(intr.fx * P.x() * iz + intr.cx - c.pixel.x(), intr.fy * P.y() * iz + intr.cy - c.pixel.y());
      Eigen::Matrix<double, 2, 3> Jp;
      Jp << intr.fx * iz, 0, -intr.fx * P.x() * iz * iz, 0, intr.fy * iz, -intr.fy * P.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> Jx;
      Jx.leftCols<3>() = -R * skew(c.point);
      Jx.rightCols<3>() = Mat3::Identity();
      const Eigen::Matrix<double, 2, 6> J = Jp * Jx;
      H += J.transpose() * J;
      g += J.transpose() * r;
    }
    bool improved = false;
    while (lambda < 1e12) {
      Mat6 A = H;
      A.diagonal() += lambda * H.diagonal().cwiseMax(1e-12);
      const Vec6 step = -A.ldlt().solve(g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      if (step.norm() < 1e-10) {
        res.converged = true;
        return res;
      }
      SE3Pose cand;
      const Vec3 w = step.head<3>();
      const double angle = w.norm();
      const Quat dq = angle > 0.0 ? Quat(Eigen::AngleAxisd(angle, w / angle)) : Quat::Identity();
      cand.rotation = (res.pose.rotation * dq).normalized();
      cand.translation = res.pose.translation + step.tail<3>();
      const double next = cost(cand, inliers, intr);
      if (next < current) {
        const double delta = current - next;
        res.pose = cand;
        current = next;
        lambda = std::max(lambda * 0.1, 1e-12);
        improved = true;
        if (delta < 1e-12) {
          res.converged = true;
          return res;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

SE3Pose refine_pose(const SE3Pose& pose, std::span<const Correspondence> inliers, const CameraIntrinsics& intr) {
  return refine_pose_ex(pose, inliers, intr).pose;
}

namespace {

PoseEstimate score(const SE3Pose& pose, std::span<const Correspondence> c, const CameraIntrinsics& intr,
                   double threshold) {
  PoseEstimate e;
  e.pose = pose;
  e.inlier_mask.assign(c.size(), false);
  double sum = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double err = reprojection_error(pose, c[i], intr);
    if (err < threshold) {
      e.inlier_mask[i] = true;
      ++e.n_inliers;
      sum += err;
    }
  }
  e.mean_reproj_err_px = e.n_inliers > 0 ? sum / e.n_inliers : 0.0;
  return e;
}

std::vector<Correspondence> select(std::span<const Correspondence> c, const std::vector<bool>& mask) {
  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (mask[i]) out.push_back(c[i]);
  return out;
}

}  // namespace

std::optional<PoseEstimate> ransac_pnp(std::span<const Correspondence> c, const CameraIntrinsics& intr,
                                       const RansacConfig& cfg) {
  cfg.validate();
  const int n = int(c.size());
  if (n < 4) return std::nullopt;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::optional<PoseEstimate> best;
  double needed = double(cfg.max_iters);
  int iter = 0;
  for (; iter < cfg.max_iters && iter < needed; ++iter) {
    std::array<int, 4> idx{};
    for (int k = 0; k < 4; ++k) {
      int v;
      do v = pick(rng);
      while (std::find(idx.begin(), idx.begin() + k, v) != idx.begin() + k);
      idx[std::size_t(k)] = v;
    }
    const std::array<Correspondence, 3> sample{c[std::size_t(idx[0])], c[std::size_t(idx[1])], c[std::size_t(idx[2])]};
    const P3PResult cands = p3p_solve(sample, intr);
    const SE3Pose* chosen = nullptr;
    double chosen_err = kInf;
    for (const auto& pose : cands.poses) {
      const double e = reprojection_error(pose, c[std::size_t(idx[3])], intr);
      if (e < chosen_err) {
        chosen_err = e;
        chosen = &pose;
      }
    }
    if (!chosen) continue;
    PoseEstimate e = score(*chosen, c, intr, cfg.reproj_threshold_px);
    if (!best || e.n_inliers > best->n_inliers) {
      best = std::move(e);
      const double w = double(best->n_inliers) / n;
      const double fail = 1.0 - std::pow(w, 4);
      if (fail <= 0.0) {
        needed = 0.0;
      } else if (fail < 1.0) {
        needed = std::ceil(std::log(1.0 - cfg.confidence) / std::log(fail));
      }
    }
  }
  if (!best || best->n_inliers < 4) return std::nullopt;
  best->iterations = iter;
  best->converged = true;
  if (cfg.refine) {
    // Refit on the inliers and re-collect them under the refined pose until
    // the set stops changing; the final pose is refined on the final set.
    for (int round = 0;; ++round) {
      const std::vector<Correspondence> in = select(c, best->inlier_mask);
      const RefineResult r = refine_pose_ex(best->pose, in, intr);
      PoseEstimate next = score(r.pose, c, intr, cfg.reproj_threshold_px);
      if (round < 4 && next.n_inliers > best->n_inliers) {
        next.iterations = best->iterations;
        best = std::move(next);
        continue;
      }
      best->pose = r.pose;
      best->converged = r.converged;
      double sum = 0.0;
      for (const auto& x : in) sum += reprojection_error(r.pose, x, intr);
      best->mean_reproj_err_px = sum / double(in.size());
      break;
    }
  }
  return best;
}

LiftResult lift_to_3d(std::span<const FineMatch> matches, const RenderOutput& rendered, const SE3Pose& render_pose,
                      const CameraIntrinsics& render_intr, const Vec2& to_image) {
  LiftResult out;
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const FineMatch& m = matches[i];
    const int x = int(std::lround(m.render.x())), y = int(std::lround(m.render.y()));
    if (x < 0 || y < 0 || x >= rendered.acc_alpha.width || y >= rendered.acc_alpha.height ||
        rendered.acc_alpha.at(y, x) <= kValidAlpha) {
      ++out.dropped;
      continue;
    }
    const Vec3 X = backproject(m.render.x(), m.render.y(), rendered.depth.at(y, x), render_pose, render_intr);
    out.correspondences.push_back({Vec2(m.query.x() * to_image.x(), m.query.y() * to_image.y()), X});
    out.match_index.push_back(int(i));
  }
  return out;
}

}  // namespace featloc
