#pragma once

#include "oapt/plane.hpp"

namespace oapt {

struct MetricReport {
  double psnr = 0;
  double ssim = 0;
  double psnr_b = 0;
};

// 10*log10(255^2/MSE), capped at 99 dB for identical images.
double psnr(const Plane& a, const Plane& b);

// Single-scale SSIM: 11x11 Gaussian window sigma=1.5,
// C1=(0.01*255)^2, C2=(0.03*255)^2, mean over valid positions only.
double ssim(const Plane& a, const Plane& b);

// PSNR penalized by the blocking effect factor of the *test* image
// (asymmetric by definition): PSNR-B = 10*log10(255^2/(MSE + BEF)) where
// BEF >= 0 compares squared differences across 8-aligned block boundaries
// against non-boundary neighbor differences.
double psnr_b(const Plane& ref, const Plane& test);

MetricReport evaluate_pair(const Plane& ref, const Plane& test);

}  // namespace oapt
