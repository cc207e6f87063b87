#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace featloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using VecX = Eigen::VectorXd;

/// Minimum camera-space depth for a point to be projectable.
inline constexpr double kDepthEpsilon = 1e-6;
/// Accumulated opacity above which a rendered pixel carries valid feature/depth.
inline constexpr double kValidAlpha = 1e-3;
/// Blending weight a Gaussian needs at its own pixel to count as visible.
inline constexpr double kVisibilityWeight = 0.05;

class DegenerateVectorError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DimensionMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct FeatureGaussian {
  Vec3 center = Vec3::Zero();
  Quat rotation = Quat::Identity();  // unit
  Vec3 scale = Vec3::Ones();         // per-axis standard deviation
  double opacity = 1.0;
  Vec3 color = Vec3::Zero();  // degree-0 RGB
  VecX feature;

  /// World-space covariance R S S^T R^T.
  Mat3 covariance() const;
};

struct AlignedBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  double diameter() const { return (max - min).norm(); }
  Vec3 center() const { return 0.5 * (min + max); }
};

/// Ordered collection of Gaussians sharing one feature dimension. Validated on
/// construction; the bounding box is the tight box around all centers.
class GaussianScene {
 public:
  explicit GaussianScene(std::vector<FeatureGaussian> gaussians);

  std::size_t size() const { return gaussians_.size(); }
  int feature_dim() const { return feature_dim_; }
  const AlignedBox& bounds() const { return bounds_; }
  const FeatureGaussian& operator[](std::size_t i) const { return gaussians_[i]; }
  std::span<const FeatureGaussian> gaussians() const { return gaussians_; }
  std::vector<Vec3> centers() const;

  // Appearance attributes are the only mutable part of a scene.
  void set_color(std::size_t i, const Vec3& c);
  void set_feature(std::size_t i, const VecX& f);

 private:
  std::vector<FeatureGaussian> gaussians_;
  int feature_dim_ = 0;
  AlignedBox bounds_;
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  void validate() const;

  /// Intrinsics for the same camera sampled on a width x height grid, using
  /// the texel-center mapping u' = u * (width - 1) / (this->width - 1).
  CameraIntrinsics scaled_to(int new_width, int new_height) const;

  int long_side() const { return std::max(width, height); }
};

/// Per-axis factor mapping pixel coordinates of a src_w x src_h grid onto a
/// dst_w x dst_h grid (texel centers, corners aligned).
Vec2 grid_scale(int src_w, int src_h, int dst_w, int dst_h);

/// World-to-camera rigid transform: p_cam = R * p_world + t.
struct SE3Pose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  static SE3Pose identity() { return {}; }
  static SE3Pose from_matrix(const Mat3& R, const Vec3& t);

  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
  Vec3 transform(const Vec3& p_world) const { return rotation * p_world + translation; }
  SE3Pose inverse() const;
  /// Camera center in world coordinates, -R^T t.
  Vec3 camera_center() const;
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Pinhole projection; nullopt when the camera-space depth is <= kDepthEpsilon.
std::optional<Projection> project(const Vec3& point, const SE3Pose& pose,
                                  const CameraIntrinsics& intr);

/// World point at camera-space depth `depth` along the ray through (u, v).
Vec3 backproject(double u, double v, double depth, const SE3Pose& pose,
                 const CameraIntrinsics& intr);

/// H x W scalar grid, row-major.
struct Grid2D {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Grid2D() = default;
  Grid2D(int h, int w, double fill = 0.0) : height(h), width(w), data(std::size_t(h) * w, fill) {}

  double& at(int y, int x) { return data[std::size_t(y) * width + x]; }
  double at(int y, int x) const { return data[std::size_t(y) * width + x]; }
};

/// D x H' x W' descriptor grid, row-major per channel.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int d, int h, int w) : channels(d), height(h), width(w), data(std::size_t(d) * h * w, 0.0) {}

  std::size_t plane() const { return std::size_t(height) * width; }
  double& at(int c, int y, int x) { return data[c * plane() + std::size_t(y) * width + x]; }
  double at(int c, int y, int x) const { return data[c * plane() + std::size_t(y) * width + x]; }

  VecX pixel(int y, int x) const;
  void set_pixel(int y, int x, const VecX& v);
  bool same_shape(const FeatureMap& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

/// 3 x H x W color image with values in [0, 1].
struct ImageBuffer {
  int height = 0;
  int width = 0;
  std::vector<double> data;

  ImageBuffer() = default;
  ImageBuffer(int h, int w) : height(h), width(w), data(std::size_t(3) * h * w, 0.0) {}

  std::size_t plane() const { return std::size_t(height) * width; }
  double& at(int c, int y, int x) { return data[c * plane() + std::size_t(y) * width + x]; }
  double at(int c, int y, int x) const { return data[c * plane() + std::size_t(y) * width + x]; }
  void clamp();
  bool same_shape(const ImageBuffer& o) const { return height == o.height && width == o.width; }
};

/// Bilinear sample at feature-map coordinates; throws std::out_of_range
/// outside [0, W'-1] x [0, H'-1].
VecX bilinear_sample(const FeatureMap& fm, double u, double v);

/// Resample a map onto a new grid with the texel-center convention.
FeatureMap resize_bilinear(const FeatureMap& fm, int new_width, int new_height);

/// <a,b> / (|a||b|); throws DegenerateVectorError for zero-norm input.
double cosine_similarity(const VecX& a, const VecX& b);

/// a / |a|; throws DegenerateVectorError for zero-norm input.
VecX normalized(const VecX& a);

}  // namespace featloc
