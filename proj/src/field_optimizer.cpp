#include "featloc/field_optimizer.hpp"

#include "featloc/ssim.hpp"

#include <cmath>

namespace featloc {
namespace {

constexpr double kFeatureNormFloor = 1e-12;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

struct Contribution {
  int index;
  double weight;
};

// Rendered feature map together with the norm of the pre-normalization sum.
struct FeatureForward {
  FeatureMap feature;
  Grid2D accum_norm;
};

ImageBuffer render_color(const BlendPlan& plan, const GaussianScene& scene) {
  ImageBuffer img(plan.height(), plan.width());
  for (int y = 0; y < plan.height(); ++y)
    for (int x = 0; x < plan.width(); ++x) {
      Vec3 c = Vec3::Zero();
      plan.for_each_contribution(x, y, [&](const Splat2D& s, double w) { c += w * scene[s.gaussian_index].color; });
      for (int k = 0; k < 3; ++k) img.at(k, y, x) = c[k];
    }
  return img;
}

FeatureForward render_feature(const BlendPlan& plan, const GaussianScene& scene,
                              const std::vector<VecX>& unit) {
  FeatureForward out{FeatureMap(scene.feature_dim(), plan.height(), plan.width()),
                     Grid2D(plan.height(), plan.width())};
  for (int y = 0; y < plan.height(); ++y)
    for (int x = 0; x < plan.width(); ++x) {
      VecX a = VecX::Zero(scene.feature_dim());
      plan.for_each_contribution(x, y, [&](const Splat2D& s, double w) { a += w * unit[s.gaussian_index]; });
      const double n = a.norm();
      out.accum_norm.at(y, x) = n;
      if (n > kFeatureNormFloor) out.feature.set_pixel(y, x, a / n);
    }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (lambda_dssim < 0 || weight_rgb < 0 || weight_feat < 0) throw std::invalid_argument("TrainConfig: negative weight");
  if (!(lr_feature > 0 && lr_color > 0)) throw std::invalid_argument("TrainConfig: learning rates must be positive");
  if (!(lr_final_ratio > 0)) throw std::invalid_argument("TrainConfig: lr_final_ratio must be positive");
  if (steps < 0 || batch < 1) throw std::invalid_argument("TrainConfig: bad step or batch count");
}

double loss_rgb(const ImageBuffer& rendered, const ImageBuffer& target, double lambda) {
  if (!rendered.same_shape(target)) throw DimensionMismatchError("loss_rgb: image size mismatch");
  double l1 = 0.0;
  for (std::size_t i = 0; i < rendered.data.size(); ++i) l1 += std::abs(rendered.data[i] - target.data[i]);
  l1 /= double(rendered.data.size());
  const double dssim = lambda > 0.0 ? (1.0 - ssim(rendered, target)) / 2.0 : 0.0;
  return (1.0 - lambda) * l1 + lambda * dssim;
}

double loss_feature(const FeatureMap& rendered, const FeatureMap& target) {
  if (!rendered.same_shape(target)) throw DimensionMismatchError("loss_feature: feature map shape mismatch");
  double l1 = 0.0;
  for (std::size_t i = 0; i < rendered.data.size(); ++i) l1 += std::abs(rendered.data[i] - target.data[i]);
  return l1 / double(rendered.data.size());
}

double total_loss(const TrainView& view, const GaussianScene& scene, const TrainConfig& cfg) {
  double loss = 0.0;
  if (cfg.weight_rgb > 0.0) {
    const RenderOutput r = render(scene, view.pose, view.intr);
    loss += cfg.weight_rgb * loss_rgb(r.color, view.image, cfg.lambda_dssim);
  }
  if (cfg.weight_feat > 0.0) {
    if (view.feat.channels != scene.feature_dim()) throw DimensionMismatchError("total_loss: feature dimension mismatch");
    const RenderOutput r = render(scene, view.pose, view.feature_intrinsics());
    loss += cfg.weight_feat * loss_feature(r.feature, view.feat);
  }
  return loss;
}

AttributeGradients grad_attributes(const TrainView& view, const GaussianScene& scene,
                                   const TrainConfig& cfg) {
  AttributeGradients out;
  out.color.assign(scene.size(), Vec3::Zero());
  out.feature.assign(scene.size(), VecX::Zero(scene.feature_dim()));

  if (cfg.weight_rgb > 0.0) {
    if (!view.image.same_shape(ImageBuffer(view.intr.height, view.intr.width)))
      throw DimensionMismatchError("grad_attributes: image does not match intrinsics");
    const BlendPlan plan(scene, view.pose, view.intr);
    const ImageBuffer rendered = render_color(plan, scene);
    const double lambda = cfg.lambda_dssim;
    ImageBuffer dssim_grad;
    double ssim_value = 1.0;
    if (lambda > 0.0) ssim_value = ssim_with_gradient(rendered, view.image, &dssim_grad);
    double l1 = 0.0;
    const double inv_n = 1.0 / double(rendered.data.size());
    ImageBuffer g(rendered.height, rendered.width);
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
      const double d = rendered.data[i] - view.image.data[i];
      l1 += std::abs(d);
      g.data[i] = (1.0 - lambda) * sign(d) * inv_n;
      if (lambda > 0.0) g.data[i] -= 0.5 * lambda * dssim_grad.data[i];
      g.data[i] *= cfg.weight_rgb;
    }
    out.loss += cfg.weight_rgb * ((1.0 - lambda) * l1 * inv_n + lambda * (1.0 - ssim_value) / 2.0);
    for (int y = 0; y < plan.height(); ++y)
      for (int x = 0; x < plan.width(); ++x) {
        const Vec3 gp(g.at(0, y, x), g.at(1, y, x), g.at(2, y, x));
        plan.for_each_contribution(x, y, [&](const Splat2D& s, double w) { out.color[s.gaussian_index] += w * gp; });
      }
  }

  if (cfg.weight_feat > 0.0) {
    if (view.feat.channels != scene.feature_dim()) throw DimensionMismatchError("grad_attributes: feature dimension mismatch");
    const auto unit = unit_features(scene);
    const BlendPlan plan(scene, view.pose, view.feature_intrinsics());
    const FeatureForward fwd = render_feature(plan, scene, unit);
    const int dim = scene.feature_dim();
    const double inv_n = 1.0 / double(fwd.feature.data.size());
    double l1 = 0.0;
    std::vector<VecX> grad_unit(scene.size(), VecX::Zero(dim));
    VecX g(dim);
    for (int y = 0; y < plan.height(); ++y)
      for (int x = 0; x < plan.width(); ++x) {
        for (int c = 0; c < dim; ++c) {
          const double d = fwd.feature.at(c, y, x) - view.feat.at(c, y, x);
          l1 += std::abs(d);
          g[c] = cfg.weight_feat * sign(d) * inv_n;
        }
        const double n = fwd.accum_norm.at(y, x);
        if (n <= kFeatureNormFloor) continue;
        const VecX fhat = fwd.feature.pixel(y, x);
        const VecX g_accum = (g - fhat * fhat.dot(g)) / n;
        plan.for_each_contribution(x, y, [&](const Splat2D& s, double w) { grad_unit[s.gaussian_index] += w * g_accum; });
      }
    out.loss += cfg.weight_feat * l1 * inv_n;
    for (std::size_t i = 0; i < scene.size(); ++i) {
      const double fn = scene[i].feature.norm();
      if (fn == 0.0) continue;
      const VecX& u = unit[i];
      out.feature[i] = (grad_unit[i] - u * u.dot(grad_unit[i])) / fn;
    }
  }
  return out;
}

FitResult fit_field(const GaussianScene& scene, std::span<const TrainView> views, const TrainConfig& cfg) {
  cfg.validate();
  if (views.empty()) throw std::invalid_argument("fit_field: no training views");
  FitResult result{scene, {}};
  GaussianScene& s = result.scene;
  const std::size_t n = s.size();
  const int dim = s.feature_dim();
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-15;
  std::vector<Vec3> m_c(n, Vec3::Zero()), v_c(n, Vec3::Zero());
  std::vector<VecX> m_f(n, VecX::Zero(dim)), v_f(n, VecX::Zero(dim));
  std::size_t next_view = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<Vec3> g_c(n, Vec3::Zero());
    std::vector<VecX> g_f(n, VecX::Zero(dim));
    double loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto grads = grad_attributes(views[next_view], s, cfg);
      next_view = (next_view + 1) % views.size();
      loss += grads.loss / cfg.batch;
      for (std::size_t i = 0; i < n; ++i) {
        g_c[i] += grads.color[i] / cfg.batch;
        g_f[i] += grads.feature[i] / cfg.batch;
      }
    }
    result.loss_trace.push_back(loss);
    const double t = step + 1;
    const double decay = std::pow(cfg.lr_final_ratio, cfg.steps > 1 ? double(step) / (cfg.steps - 1) : 0.0);
    const double bc1 = 1.0 - std::pow(beta1, t), bc2 = 1.0 - std::pow(beta2, t);
    const double lr_c = cfg.lr_color * decay, lr_f = cfg.lr_feature * decay;
    for (std::size_t i = 0; i < n; ++i) {
      m_c[i] = beta1 * m_c[i] + (1 - beta1) * g_c[i];
      v_c[i] = beta2 * v_c[i] + (1 - beta2) * g_c[i].cwiseAbs2();
      const Vec3 step_c = lr_c * (m_c[i] / bc1).array() / ((v_c[i] / bc2).array().sqrt() + eps);
      s.set_color(i, (s[i].color - step_c).cwiseMax(0.0).cwiseMin(1.0));

      m_f[i] = beta1 * m_f[i] + (1 - beta1) * g_f[i];
      v_f[i] = beta2 * v_f[i] + (1 - beta2) * g_f[i].cwiseAbs2();
      const VecX step_f = lr_f * ((m_f[i] / bc1).array() / ((v_f[i] / bc2).array().sqrt() + eps)).matrix();
      s.set_feature(i, s[i].feature - step_f);
    }
  }
  return result;
}

}  // namespace featloc
