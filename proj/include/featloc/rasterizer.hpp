#pragma once

#include "featloc/scene.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace featloc {

struct RasterConfig {
  double cov_regularization = 0.3;  // px^2 added to the 2D covariance diagonal
  double footprint_sigma = 3.0;     // kernel support, in standard deviations
  double min_transmittance = 1e-4;
  bool early_termination = true;
};

/// Inclusive pixel rectangle.
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  bool intersects(int width, int height) const { return x1 >= 0 && y1 >= 0 && x0 < width && y0 < height; }
};

struct Splat2D {
  int gaussian_index = -1;
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Identity();
  Mat2 conic = Mat2::Identity();  // cov^-1
  double depth = 0.0;
  double opacity = 0.0;
  double cutoff_sq = 9.0;
  PixelRect footprint;

  /// exp(-d^T conic d / 2), truncated to 0 outside the footprint ellipse.
  double falloff(double x, double y) const {
    const double dx = x - mean.x();
    const double dy = y - mean.y();
    const double m2 = conic(0, 0) * dx * dx + 2.0 * conic(0, 1) * dx * dy + conic(1, 1) * dy * dy;
    return m2 <= cutoff_sq ? std::exp(-0.5 * m2) : 0.0;
  }
};

/// EWA projection of one Gaussian. nullopt when it lies behind the camera or
/// its footprint misses the image.
std::optional<Splat2D> splat(const FeatureGaussian& g, int index, const SE3Pose& pose,
                             const CameraIntrinsics& intr, const RasterConfig& cfg = {});

struct RenderOutput {
  ImageBuffer color;
  FeatureMap feature;
  Grid2D depth;
  Grid2D acc_alpha;
};

/// Depth-sorted splats binned into screen tiles. Per-pixel traversal yields
/// each contributing splat with its blending weight alpha * G * T, front to
/// back.
class BlendPlan {
 public:
  static constexpr int kTile = 16;

  BlendPlan(const GaussianScene& scene, const SE3Pose& pose, const CameraIntrinsics& intr,
            const RasterConfig& cfg = {});

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<Splat2D>& splats() const { return splats_; }

  template <class Fn>
  void for_each_contribution(int x, int y, Fn&& fn) const {
    const auto& bin = tiles_[std::size_t(y / kTile) * tiles_x_ + x / kTile];
    double transmittance = 1.0;
    for (const int s : bin) {
      const Splat2D& sp = splats_[s];
      if (x < sp.footprint.x0 || x > sp.footprint.x1 || y < sp.footprint.y0 || y > sp.footprint.y1) continue;
      const double g = sp.falloff(x, y);
      if (g == 0.0) continue;
      const double a = sp.opacity * g;
      fn(sp, a * transmittance);
      transmittance *= 1.0 - a;
      if (early_termination_ && transmittance < min_transmittance_) break;
    }
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int tiles_x_ = 0;
  bool early_termination_ = true;
  double min_transmittance_ = 1e-4;
  std::vector<Splat2D> splats_;
  std::vector<std::vector<int>> tiles_;
};

/// Tiled front-to-back alpha blending of color, depth, opacity and
/// L2-normalized features.
RenderOutput render(const GaussianScene& scene, const SE3Pose& pose, const CameraIntrinsics& intr,
                    const RasterConfig& cfg = {});

/// Brute-force renderer: every Gaussian is evaluated at every pixel and the
/// contributors are sorted per pixel. Same contract as render().
RenderOutput render_reference(const GaussianScene& scene, const SE3Pose& pose,
                              const CameraIntrinsics& intr, const RasterConfig& cfg = {});

struct CameraView {
  SE3Pose pose;
  CameraIntrinsics intr;
};

/// For each Gaussian, the indices of the views in which it is visible: its
/// center projects inside the image in front of the camera and its blending
/// weight at that pixel is at least `min_weight`.
std::vector<std::vector<int>> compute_visibility(const GaussianScene& scene,
                                                 std::span<const CameraView> views,
                                                 double min_weight = kVisibilityWeight,
                                                 const RasterConfig& cfg = {});

/// Blending weight of Gaussian `index` at the pixel nearest its projected
/// center; 0 when the center is behind the camera or outside the image.
double own_pixel_weight(const BlendPlan& plan, const GaussianScene& scene, int index, const SE3Pose& pose,
                        const CameraIntrinsics& intr);

/// Unit-normalized copies of every Gaussian feature (zero stays zero).
std::vector<VecX> unit_features(const GaussianScene& scene);

}  // namespace featloc
