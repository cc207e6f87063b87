#pragma once

#include "featloc/scene.hpp"

namespace featloc {

/// Mean SSIM over all pixels and the three channels, computed with an 11x11
/// Gaussian window (sigma 1.5, zero padding) and C1 = 0.01^2, C2 = 0.03^2.
double ssim(const ImageBuffer& x, const ImageBuffer& y);

/// Same as ssim(); when grad_x is non-null it receives d ssim / d x.
double ssim_with_gradient(const ImageBuffer& x, const ImageBuffer& y, ImageBuffer* grad_x);

}  // namespace featloc
