#include "featloc/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace featloc {
namespace {

// Independent generator for one purpose within a seeded dataset.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(id), std::uint32_t(id >> 32)};
  return std::mt19937_64(seq);
}

enum Stream : std::uint64_t { kScene = 1, kTrainPoses, kQueryPoses, kTrainNoise, kQueryNoise, kAppearance };

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

VecX random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> n01(0.0, 1.0);
  VecX f(dim);
  do {
    for (int i = 0; i < dim; ++i) f[i] = n01(rng);
  } while (f.norm() < 1e-6);
  return f.normalized();
}

SE3Pose orbit_pose(std::mt19937_64& rng, const SyntheticConfig& cfg, const Vec3& center, double azimuth) {
  const double elev = deg2rad(uniform(rng, cfg.elevation_min_deg, cfg.elevation_max_deg));
  const double radius = uniform(rng, cfg.orbit_radius_min, cfg.orbit_radius_max);
  const Vec3 eye = center + radius * Vec3(std::cos(elev) * std::cos(azimuth), std::cos(elev) * std::sin(azimuth),
                                          std::sin(elev));
  const Vec3 jitter(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1));
  return look_at(eye, center + cfg.extent * jitter);
}

double visible_fraction(const GaussianScene& scene, const SE3Pose& pose, const CameraIntrinsics& intr) {
  const CameraView view{pose, intr};
  const auto vis = compute_visibility(scene, std::span<const CameraView>(&view, 1));
  std::size_t n = 0;
  for (const auto& v : vis) n += !v.empty();
  return double(n) / double(scene.size());
}

}  // namespace

void SyntheticConfig::validate() const {
  if (n_gaussians < 1) throw std::invalid_argument("SyntheticConfig: n_gaussians must be >= 1");
  if (feature_dim < 2) throw std::invalid_argument("SyntheticConfig: feature_dim must be >= 2");
  if (n_train_views < 1 || n_query_views < 1) throw std::invalid_argument("SyntheticConfig: need at least one view");
  if (!(extent > 0.0)) throw std::invalid_argument("SyntheticConfig: extent must be positive");
  if (image_width < 2 || image_height < 2 || feature_stride < 1 || image_width / feature_stride < 2 ||
      image_height / feature_stride < 2)
    throw std::invalid_argument("SyntheticConfig: bad image or feature-map size");
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) throw std::invalid_argument("SyntheticConfig: fov must be in (0,180)");
  if (!(orbit_radius_min > 0.0 && orbit_radius_max >= orbit_radius_min))
    throw std::invalid_argument("SyntheticConfig: bad orbit radius range");
  if (!(elevation_max_deg >= elevation_min_deg && elevation_max_deg < 90.0 && elevation_min_deg > -90.0))
    throw std::invalid_argument("SyntheticConfig: bad elevation range");
  if (!(feature_noise_sigma >= 0.0)) throw std::invalid_argument("SyntheticConfig: noise sigma must be >= 0");
  if (!(opacity_min >= 0.0 && opacity_max <= 1.0 && opacity_min <= opacity_max))
    throw std::invalid_argument("SyntheticConfig: bad opacity range");
  if (!(scale_min > 0.0 && scale_max >= scale_min)) throw std::invalid_argument("SyntheticConfig: bad scale range");
  if (!(disc_thickness > 0.0)) throw std::invalid_argument("SyntheticConfig: disc_thickness must be positive");
  if (max_pose_attempts < 1) throw std::invalid_argument("SyntheticConfig: max_pose_attempts must be >= 1");
}

SE3Pose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(Vec3::UnitZ());
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitY());
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 R;
  R.row(0) = right;
  R.row(1) = down;
  R.row(2) = forward;
  return SE3Pose::from_matrix(R, -R * eye);
}

CameraIntrinsics synthetic_intrinsics(const SyntheticConfig& cfg) {
  CameraIntrinsics k;
  k.width = cfg.image_width;
  k.height = cfg.image_height;
  k.fx = k.fy = 0.5 * cfg.image_width / std::tan(0.5 * deg2rad(cfg.fov_deg));
  k.cx = 0.5 * (cfg.image_width - 1);
  k.cy = 0.5 * (cfg.image_height - 1);
  return k;
}

FeatureMap synthesize_feature_map(const GaussianScene& scene, const SE3Pose& pose, const CameraIntrinsics& intr,
                                  int stride, double noise_sigma, std::uint64_t noise_seed) {
  const CameraIntrinsics fk = intr.scaled_to(intr.width / stride, intr.height / stride);
  const RenderOutput r = render_reference(scene, pose, fk);
  FeatureMap fm = r.feature;
  if (noise_sigma == 0.0) return fm;
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  for (int y = 0; y < fm.height; ++y)
    for (int x = 0; x < fm.width; ++x) {
      if (r.acc_alpha.at(y, x) <= kValidAlpha) continue;
      VecX f = fm.pixel(y, x);
      for (int c = 0; c < fm.channels; ++c) f[c] += noise(rng);
      const double n = f.norm();
      fm.set_pixel(y, x, n > 0.0 ? VecX(f / n) : f);
    }
  return fm;
}

ImageBuffer synthesize_image(const GaussianScene& scene, const SE3Pose& pose, const CameraIntrinsics& intr) {
  ImageBuffer img = render_reference(scene, pose, intr).color;
  img.clamp();
  return img;
}

GaussianScene synthesize_scene(const SyntheticConfig& cfg) {
  cfg.validate();
  auto rng = stream(cfg.seed, kScene);
  const double e = cfg.extent;
  const double log_lo = std::log(cfg.scale_min), log_hi = std::log(cfg.scale_max);
  std::vector<FeatureGaussian> gs;
  gs.reserve(std::size_t(cfg.n_gaussians));
  for (int i = 0; i < cfg.n_gaussians; ++i) {
    FeatureGaussian g;
    const double s1 = std::exp(uniform(rng, log_lo, log_hi));
    const double s2 = std::exp(uniform(rng, log_lo, log_hi));
    if (cfg.layout == SceneLayout::surface) {
      // Faces +x, -x, +y, -y, +z; the bottom is never seen from the orbit.
      const int face = int(rng() % 5);
      const double a = uniform(rng, -e, e), b = uniform(rng, -e, e);
      Vec3 normal;
      switch (face) {
        case 0: g.center = Vec3(e, a, b); normal = Vec3::UnitX(); break;
        case 1: g.center = Vec3(-e, a, b); normal = -Vec3::UnitX(); break;
        case 2: g.center = Vec3(a, e, b); normal = Vec3::UnitY(); break;
        case 3: g.center = Vec3(a, -e, b); normal = -Vec3::UnitY(); break;
        default: g.center = Vec3(a, b, e); normal = Vec3::UnitZ(); break;
      }
      const Vec3 helper = std::abs(normal.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
      const Vec3 u0 = normal.cross(helper).normalized();
      const Vec3 v0 = normal.cross(u0);
      const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      Mat3 R;
      R.col(0) = std::cos(phi) * u0 + std::sin(phi) * v0;
      R.col(1) = normal.cross(R.col(0));
      R.col(2) = normal;
      g.rotation = Quat(R).normalized();
      g.scale = Vec3(s1, s2, cfg.disc_thickness * std::min(s1, s2));
    } else {
      g.center = Vec3(uniform(rng, -e, e), uniform(rng, -e, e), uniform(rng, -e, e));
      std::normal_distribution<double> n01(0.0, 1.0);
      Eigen::Vector4d q;
      do {
        for (int k = 0; k < 4; ++k) q[k] = n01(rng);
      } while (q.norm() < 1e-6);
      q.normalize();
      g.rotation = Quat(q[0], q[1], q[2], q[3]);
      g.scale = Vec3(s1, s2, std::exp(uniform(rng, log_lo, log_hi)));
    }
    g.opacity = uniform(rng, cfg.opacity_min, cfg.opacity_max);
    g.color = Vec3(uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1));
    g.feature = random_unit(rng, cfg.feature_dim);
    gs.push_back(std::move(g));
  }
  return GaussianScene(std::move(gs));
}

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticDataset ds{synthesize_scene(cfg), {}, {}, {}};
  const GaussianScene& scene = ds.scene;
  const CameraIntrinsics intr = synthetic_intrinsics(cfg);
  const Vec3 center = scene.bounds().center();

  auto train_rng = stream(cfg.seed, kTrainPoses);
  for (int i = 0; i < cfg.n_train_views; ++i) {
    const double az = 2.0 * std::numbers::pi * (i + uniform(train_rng, -0.25, 0.25)) / cfg.n_train_views;
    TrainView v;
    v.pose = orbit_pose(train_rng, cfg, center, az);
    v.intr = intr;
    v.image = synthesize_image(scene, v.pose, intr);
    v.feat = synthesize_feature_map(scene, v.pose, intr, cfg.feature_stride, cfg.feature_noise_sigma,
                                    stream(cfg.seed, kTrainNoise + 16 * std::uint64_t(i))());
    ds.train_names.push_back("train_" + std::to_string(i));
    ds.train.push_back(std::move(v));
  }

  auto query_rng = stream(cfg.seed, kQueryPoses);
  for (int i = 0; i < cfg.n_query_views; ++i) {
    QueryView q;
    q.name = "query_" + std::to_string(i);
    q.intr = intr;
    bool found = false;
    for (int attempt = 0; attempt < cfg.max_pose_attempts && !found; ++attempt) {
      q.pose = orbit_pose(query_rng, cfg, center, uniform(query_rng, 0.0, 2.0 * std::numbers::pi));
      found = visible_fraction(scene, q.pose, intr) >= cfg.min_visible_fraction;
    }
    if (!found) throw std::runtime_error("generate_synthetic: no query pose sees enough of the scene");
    q.feat = synthesize_feature_map(scene, q.pose, intr, cfg.feature_stride, cfg.feature_noise_sigma,
                                    stream(cfg.seed, kQueryNoise + 16 * std::uint64_t(i))());
    ds.queries.push_back(std::move(q));
  }
  return ds;
}

GaussianScene reset_appearance(const GaussianScene& scene, std::uint64_t seed) {
  auto rng = stream(seed, kAppearance);
  GaussianScene out = scene;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.set_color(i, Vec3::Constant(0.5));
    out.set_feature(i, random_unit(rng, scene.feature_dim()));
  }
  return out;
}

}  // namespace featloc
