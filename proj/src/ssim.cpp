#include "featloc/ssim.hpp"

#include <array>
#include <cmath>

namespace featloc {
namespace {

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, 2 * kRadius + 1> gaussian_taps() {
  std::array<double, 2 * kRadius + 1> taps{};
  double sum = 0.0;
  for (int i = -kRadius; i <= kRadius; ++i) {
    taps[i + kRadius] = std::exp(-double(i * i) / (2.0 * kSigma * kSigma));
    sum += taps[i + kRadius];
  }
  for (double& t : taps) t /= sum;
  return taps;
}

// Separable zero-padded "same" convolution with the symmetric window; it is
// its own adjoint.
std::vector<double> blur(const std::vector<double>& in, int h, int w) {
  static const auto taps = gaussian_taps();
  std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -kRadius; k <= kRadius; ++k) {
        const int xx = x + k;
        if (xx >= 0 && xx < w) s += taps[k + kRadius] * in[std::size_t(y) * w + xx];
      }
      tmp[std::size_t(y) * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -kRadius; k <= kRadius; ++k) {
        const int yy = y + k;
        if (yy >= 0 && yy < h) s += taps[k + kRadius] * tmp[std::size_t(yy) * w + x];
      }
      out[std::size_t(y) * w + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const ImageBuffer& x, const ImageBuffer& y) { return ssim_with_gradient(x, y, nullptr); }

double ssim_with_gradient(const ImageBuffer& x, const ImageBuffer& y, ImageBuffer* grad_x) {
  if (!x.same_shape(y)) throw DimensionMismatchError("ssim: image size mismatch");
  const int h = x.height, w = x.width;
  const std::size_t n = x.plane();
  const double norm = 1.0 / double(3 * n);
  if (grad_x) *grad_x = ImageBuffer(h, w);
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> a(x.data.begin() + c * n, x.data.begin() + (c + 1) * n);
    std::vector<double> b(y.data.begin() + c * n, y.data.begin() + (c + 1) * n);
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      aa[i] = a[i] * a[i];
      bb[i] = b[i] * b[i];
      ab[i] = a[i] * b[i];
    }
    const auto mu_a = blur(a, h, w), mu_b = blur(b, h, w);
    const auto e_aa = blur(aa, h, w), e_bb = blur(bb, h, w), e_ab = blur(ab, h, w);
    std::vector<double> d_mu(n), d_var(n), d_cov(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
      const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      const double a1 = 2.0 * mu_a[i] * mu_b[i] + kC1;
      const double a2 = 2.0 * cov + kC2;
      const double b1 = mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1;
      const double b2 = var_a + var_b + kC2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;
      if (grad_x) {
        // Partials of s w.r.t. mu_a, var_a and cov as independent variables.
        const double ds_dmu = 2.0 * mu_b[i] * a2 / (b1 * b2) - s * 2.0 * mu_a[i] / b1;
        const double ds_dvar = -s / b2;
        const double ds_dcov = 2.0 * a1 / (b1 * b2);
        d_mu[i] = ds_dmu - 2.0 * mu_a[i] * ds_dvar - mu_b[i] * ds_dcov;
        d_var[i] = ds_dvar;
        d_cov[i] = ds_dcov;
      }
    }
    if (grad_x) {
      const auto g_mu = blur(d_mu, h, w), g_var = blur(d_var, h, w), g_cov = blur(d_cov, h, w);
      for (std::size_t i = 0; i < n; ++i)
        grad_x->data[c * n + i] = norm * (g_mu[i] + 2.0 * a[i] * g_var[i] + b[i] * g_cov[i]);
    }
  }
  return total * norm;
}

}  // namespace featloc
