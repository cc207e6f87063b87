#include "featloc/scene.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace featloc {

Mat3 FeatureGaussian::covariance() const {
  const Mat3 R = rotation.toRotationMatrix();
  const Mat3 RS = R * scale.asDiagonal();
  return RS * RS.transpose();
}

GaussianScene::GaussianScene(std::vector<FeatureGaussian> gaussians)
    : gaussians_(std::move(gaussians)) {
  if (gaussians_.empty()) throw std::invalid_argument("GaussianScene: empty scene");
  feature_dim_ = static_cast<int>(gaussians_.front().feature.size());
  bounds_.min = gaussians_.front().center;
  bounds_.max = gaussians_.front().center;
  for (std::size_t i = 0; i < gaussians_.size(); ++i) {
    const auto& g = gaussians_[i];
    const std::string where = "GaussianScene: gaussian " + std::to_string(i);
    if (std::abs(g.rotation.norm() - 1.0) > 1e-6) throw std::invalid_argument(where + " has non-unit rotation");
    if ((g.scale.array() <= 0.0).any()) throw std::invalid_argument(where + " has non-positive scale");
    if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) throw std::invalid_argument(where + " has opacity outside [0,1]");
    if (g.feature.size() != feature_dim_) throw DimensionMismatchError(where + " has a different feature dimension");
    if (!g.center.allFinite()) throw std::invalid_argument(where + " has a non-finite center");
    bounds_.min = bounds_.min.cwiseMin(g.center);
    bounds_.max = bounds_.max.cwiseMax(g.center);
  }
}

std::vector<Vec3> GaussianScene::centers() const {
  std::vector<Vec3> out;
  out.reserve(gaussians_.size());
  for (const auto& g : gaussians_) out.push_back(g.center);
  return out;
}

void GaussianScene::set_color(std::size_t i, const Vec3& c) { gaussians_.at(i).color = c; }

void GaussianScene::set_feature(std::size_t i, const VecX& f) {
  if (f.size() != feature_dim_) throw DimensionMismatchError("set_feature: wrong feature dimension");
  gaussians_.at(i).feature = f;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw std::invalid_argument("CameraIntrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("CameraIntrinsics: empty image");
  if (!(cx > 0.0 && cx < width && cy > 0.0 && cy < height))
    throw std::invalid_argument("CameraIntrinsics: principal point outside the image");
}

Vec2 grid_scale(int src_w, int src_h, int dst_w, int dst_h) {
  const double sx = src_w > 1 ? double(dst_w - 1) / double(src_w - 1) : 1.0;
  const double sy = src_h > 1 ? double(dst_h - 1) / double(src_h - 1) : 1.0;
  return {sx, sy};
}

CameraIntrinsics CameraIntrinsics::scaled_to(int new_width, int new_height) const {
  const Vec2 s = grid_scale(width, height, new_width, new_height);
  CameraIntrinsics out = *this;
  out.fx = fx * s.x();
  out.cx = cx * s.x();
  out.fy = fy * s.y();
  out.cy = cy * s.y();
  out.width = new_width;
  out.height = new_height;
  return out;
}

SE3Pose SE3Pose::from_matrix(const Mat3& R, const Vec3& t) {
  SE3Pose p;
  p.rotation = Quat(R).normalized();
  p.translation = t;
  return p;
}

SE3Pose SE3Pose::inverse() const {
  SE3Pose inv;
  inv.rotation = rotation.conjugate();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

Vec3 SE3Pose::camera_center() const { return -(rotation.conjugate() * translation); }

std::optional<Projection> project(const Vec3& point, const SE3Pose& pose,
                                  const CameraIntrinsics& intr) {
  const Vec3 pc = pose.transform(point);
  if (pc.z() <= kDepthEpsilon) return std::nullopt;
  return Projection{intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy, pc.z()};
}

Vec3 backproject(double u, double v, double depth, const SE3Pose& pose,
                 const CameraIntrinsics& intr) {
  const Vec3 pc((u - intr.cx) / intr.fx * depth, (v - intr.cy) / intr.fy * depth, depth);
  return pose.rotation.conjugate() * (pc - pose.translation);
}

VecX FeatureMap::pixel(int y, int x) const {
  VecX v(channels);
  const std::size_t off = std::size_t(y) * width + x;
  for (int c = 0; c < channels; ++c) v[c] = data[c * plane() + off];
  return v;
}

void FeatureMap::set_pixel(int y, int x, const VecX& v) {
  const std::size_t off = std::size_t(y) * width + x;
  for (int c = 0; c < channels; ++c) data[c * plane() + off] = v[c];
}

void ImageBuffer::clamp() {
  for (double& v : data) v = std::clamp(v, 0.0, 1.0);
}

VecX bilinear_sample(const FeatureMap& fm, double u, double v) {
  if (!(u >= 0.0 && v >= 0.0 && u <= fm.width - 1 && v <= fm.height - 1))
    throw std::out_of_range("bilinear_sample: (" + std::to_string(u) + ", " + std::to_string(v) +
                            ") outside feature map");
  const int x0 = std::min(static_cast<int>(std::floor(u)), fm.width - 1);
  const int y0 = std::min(static_cast<int>(std::floor(v)), fm.height - 1);
  const int x1 = std::min(x0 + 1, fm.width - 1);
  const int y1 = std::min(y0 + 1, fm.height - 1);
  const double ax = u - x0;
  const double ay = v - y0;
  const double w00 = (1 - ax) * (1 - ay), w01 = ax * (1 - ay), w10 = (1 - ax) * ay, w11 = ax * ay;
  VecX out(fm.channels);
  for (int c = 0; c < fm.channels; ++c) {
    out[c] = w00 * fm.at(c, y0, x0) + w01 * fm.at(c, y0, x1) + w10 * fm.at(c, y1, x0) +
             w11 * fm.at(c, y1, x1);
  }
  return out;
}

FeatureMap resize_bilinear(const FeatureMap& fm, int new_width, int new_height) {
  if (new_width == fm.width && new_height == fm.height) return fm;
  FeatureMap out(fm.channels, new_height, new_width);
  const Vec2 s = grid_scale(new_width, new_height, fm.width, fm.height);
  for (int y = 0; y < new_height; ++y) {
    const double sv = std::min(y * s.y(), double(fm.height - 1));
    for (int x = 0; x < new_width; ++x) {
      const double su = std::min(x * s.x(), double(fm.width - 1));
      out.set_pixel(y, x, bilinear_sample(fm, su, sv));
    }
  }
  return out;
}

double cosine_similarity(const VecX& a, const VecX& b) {
  if (a.size() != b.size()) throw DimensionMismatchError("cosine_similarity: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DegenerateVectorError("cosine_similarity: zero-norm vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

VecX normalized(const VecX& a) {
  const double n = a.norm();
  if (n == 0.0) throw DegenerateVectorError("normalized: zero-norm vector");
  return a / n;
}

}  // namespace featloc
