#include "featloc/rasterizer.hpp"

#include "featloc/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace featloc {
namespace {

// Accumulated features shorter than this have no defined direction.
constexpr double kFeatureNormFloor = 1e-12;

std::optional<Splat2D> project_splat(const FeatureGaussian& g, int index, const SE3Pose& pose,
                                     const CameraIntrinsics& intr, const RasterConfig& cfg) {
  const Vec3 pc = pose.transform(g.center);
  if (pc.z() <= kDepthEpsilon) return std::nullopt;
  const Mat3 W = pose.rotation_matrix();
  const Mat3 cov_cam = W * g.covariance() * W.transpose();
  const double iz = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> J;
  J << intr.fx * iz, 0.0, -intr.fx * pc.x() * iz * iz,
       0.0, intr.fy * iz, -intr.fy * pc.y() * iz * iz;
  Splat2D s;
  s.gaussian_index = index;
  s.mean = {intr.fx * pc.x() * iz + intr.cx, intr.fy * pc.y() * iz + intr.cy};
  s.cov = J * cov_cam * J.transpose() + cfg.cov_regularization * Mat2::Identity();
  s.cov(0, 1) = s.cov(1, 0) = 0.5 * (s.cov(0, 1) + s.cov(1, 0));
  s.conic = s.cov.inverse();
  s.depth = pc.z();
  s.opacity = g.opacity;
  s.cutoff_sq = cfg.footprint_sigma * cfg.footprint_sigma;
  // Bounding box of the ellipse d^T cov^-1 d <= cutoff^2, padded by a pixel.
  const double rx = cfg.footprint_sigma * std::sqrt(s.cov(0, 0));
  const double ry = cfg.footprint_sigma * std::sqrt(s.cov(1, 1));
  const double lim = 1e9;
  s.footprint.x0 = int(std::clamp(std::floor(s.mean.x() - rx) - 1, -lim, lim));
  s.footprint.x1 = int(std::clamp(std::ceil(s.mean.x() + rx) + 1, -lim, lim));
  s.footprint.y0 = int(std::clamp(std::floor(s.mean.y() - ry) - 1, -lim, lim));
  s.footprint.y1 = int(std::clamp(std::ceil(s.mean.y() + ry) + 1, -lim, lim));
  return s;
}

bool splat_order(const Splat2D& a, const Splat2D& b) {
  if (a.depth != b.depth) return a.depth < b.depth;
  return a.gaussian_index < b.gaussian_index;
}

struct PixelAccumulator {
  Vec3 color = Vec3::Zero();
  VecX feature;
  double depth = 0.0;
  double acc = 0.0;

  explicit PixelAccumulator(int dim) : feature(VecX::Zero(dim)) {}

  void add(const Splat2D& s, double w, const FeatureGaussian& g, const VecX& unit_feature) {
    color += w * g.color;
    feature += w * unit_feature;
    depth += w * s.depth;
    acc += w;
  }

  void store(RenderOutput& out, int y, int x) const {
    for (int c = 0; c < 3; ++c) out.color.at(c, y, x) = color[c];
    const double n = feature.norm();
    if (n > kFeatureNormFloor) {
      out.feature.set_pixel(y, x, feature / n);
    }
    out.depth.at(y, x) = acc > kValidAlpha ? depth / acc : 0.0;
    out.acc_alpha.at(y, x) = acc;
  }
};

RenderOutput make_output(const GaussianScene& scene, const CameraIntrinsics& intr) {
  RenderOutput out;
  out.color = ImageBuffer(intr.height, intr.width);
  out.feature = FeatureMap(scene.feature_dim(), intr.height, intr.width);
  out.depth = Grid2D(intr.height, intr.width);
  out.acc_alpha = Grid2D(intr.height, intr.width);
  return out;
}

}  // namespace

std::vector<VecX> unit_features(const GaussianScene& scene) {
  std::vector<VecX> out;
  out.reserve(scene.size());
  for (const auto& g : scene.gaussians()) {
    const double n = g.feature.norm();
    out.push_back(n > 0.0 ? VecX(g.feature / n) : VecX(VecX::Zero(g.feature.size())));
  }
  return out;
}

std::optional<Splat2D> splat(const FeatureGaussian& g, int index, const SE3Pose& pose,
                             const CameraIntrinsics& intr, const RasterConfig& cfg) {
  auto s = project_splat(g, index, pose, intr, cfg);
  if (!s || !s->footprint.intersects(intr.width, intr.height)) return std::nullopt;
  return s;
}

BlendPlan::BlendPlan(const GaussianScene& scene, const SE3Pose& pose, const CameraIntrinsics& intr,
                     const RasterConfig& cfg)
    : width_(intr.width),
      height_(intr.height),
      tiles_x_((intr.width + kTile - 1) / kTile),
      early_termination_(cfg.early_termination),
      min_transmittance_(cfg.min_transmittance) {
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (auto s = splat(scene[i], int(i), pose, intr, cfg)) splats_.push_back(*s);
  }
  std::sort(splats_.begin(), splats_.end(), splat_order);
  const int tiles_y = (height_ + kTile - 1) / kTile;
  tiles_.assign(std::size_t(tiles_x_) * tiles_y, {});
  for (int s = 0; s < int(splats_.size()); ++s) {
    const PixelRect& r = splats_[s].footprint;
    const int tx0 = std::max(r.x0, 0) / kTile, tx1 = std::min(r.x1, width_ - 1) / kTile;
    const int ty0 = std::max(r.y0, 0) / kTile, ty1 = std::min(r.y1, height_ - 1) / kTile;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx) tiles_[std::size_t(ty) * tiles_x_ + tx].push_back(s);
  }
}

RenderOutput render(const GaussianScene& scene, const SE3Pose& pose, const CameraIntrinsics& intr,
                    const RasterConfig& cfg) {
  const BlendPlan plan(scene, pose, intr, cfg);
  const auto features = unit_features(scene);
  RenderOutput out = make_output(scene, intr);
  parallel_for(intr.height, [&](int y) {
    for (int x = 0; x < intr.width; ++x) {
      PixelAccumulator acc(scene.feature_dim());
      plan.for_each_contribution(x, y, [&](const Splat2D& s, double w) {
        acc.add(s, w, scene[s.gaussian_index], features[s.gaussian_index]);
      });
      acc.store(out, y, x);
    }
  });
  return out;
}

RenderOutput render_reference(const GaussianScene& scene, const SE3Pose& pose,
                              const CameraIntrinsics& intr, const RasterConfig& cfg) {
  std::vector<Splat2D> all;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    if (auto s = project_splat(scene[i], int(i), pose, intr, cfg)) all.push_back(*s);
  }
  const auto features = unit_features(scene);
  RenderOutput out = make_output(scene, intr);
  parallel_for(intr.height, [&](int y) {
    std::vector<std::pair<const Splat2D*, double>> hits;
    for (int x = 0; x < intr.width; ++x) {
      hits.clear();
      for (const Splat2D& s : all) {
        const double g = s.falloff(x, y);
        if (g > 0.0) hits.emplace_back(&s, g);
      }
      std::sort(hits.begin(), hits.end(),
                [](const auto& a, const auto& b) { return splat_order(*a.first, *b.first); });
      PixelAccumulator acc(scene.feature_dim());
      double transmittance = 1.0;
      for (const auto& [s, g] : hits) {
        const double a = s->opacity * g;
        acc.add(*s, a * transmittance, scene[s->gaussian_index], features[s->gaussian_index]);
        transmittance *= 1.0 - a;
        if (cfg.early_termination && transmittance < cfg.min_transmittance) break;
      }
      acc.store(out, y, x);
    }
  });
  return out;
}

double own_pixel_weight(const BlendPlan& plan, const GaussianScene& scene, int index, const SE3Pose& pose,
                        const CameraIntrinsics& intr) {
  const auto p = project(scene[std::size_t(index)].center, pose, intr);
  if (!p) return 0.0;
  const int x = int(std::lround(p->u));
  const int y = int(std::lround(p->v));
  if (x < 0 || y < 0 || x >= intr.width || y >= intr.height) return 0.0;
  double weight = 0.0;
  plan.for_each_contribution(x, y, [&](const Splat2D& s, double w) {
    if (s.gaussian_index == index) weight = w;
  });
  return weight;
}

std::vector<std::vector<int>> compute_visibility(const GaussianScene& scene,
                                                 std::span<const CameraView> views,
                                                 double min_weight, const RasterConfig& cfg) {
  std::vector<std::vector<int>> visible(scene.size());
  for (int v = 0; v < int(views.size()); ++v) {
    const BlendPlan plan(scene, views[v].pose, views[v].intr, cfg);
    const auto& intr = views[v].intr;
    std::vector<char> flag(scene.size(), 0);
    parallel_for(int(scene.size()), [&](int i) {
      flag[i] = own_pixel_weight(plan, scene, i, views[v].pose, intr) >= min_weight;
    });
    for (std::size_t i = 0; i < scene.size(); ++i)
      if (flag[i]) visible[i].push_back(v);
  }
  return visible;
}

}  // namespace featloc
