#include "oapt/metrics.hpp"

#include <cmath>
#include <vector>

#include "oapt/errors.hpp"

namespace oapt {

namespace {

constexpr double kPsnrCap = 99.0;

void check_dims(const Plane& a, const Plane& b, const char* op) {
  if (a.height != b.height || a.width != b.width)
    throw ArgumentError(std::string(op) + ": dimension mismatch " + std::to_string(a.height) +
                        "x" + std::to_string(a.width) + " vs " + std::to_string(b.height) +
                        "x" + std::to_string(b.width));
}

double mse_of(const Plane& a, const Plane& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.pixels.size());
}

}  // namespace

double psnr(const Plane& a, const Plane& b) {
  check_dims(a, b, "psnr");
  const double mse = mse_of(a, b);
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim(const Plane& a, const Plane& b) {
  check_dims(a, b, "ssim");
  constexpr int win = 11;
  if (a.height < win || a.width < win)
    throw ArgumentError("ssim needs dims >= 11");
  constexpr double sigma = 1.5;
  constexpr double c1 = (0.01 * 255) * (0.01 * 255);
  constexpr double c2 = (0.03 * 255) * (0.03 * 255);
  double w[win][win];
  double wsum = 0;
  for (int y = 0; y < win; ++y)
    for (int x = 0; x < win; ++x) {
      const double dy = y - win / 2, dx = x - win / 2;
      w[y][x] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
      wsum += w[y][x];
    }
  for (auto& row : w)
    for (auto& v : row) v /= wsum;

  const std::int64_t oh = a.height - win + 1, ow = a.width - win + 1;
  double acc = 0;
  for (std::int64_t y0 = 0; y0 < oh; ++y0)
    for (std::int64_t x0 = 0; x0 < ow; ++x0) {
      double mx = 0, my = 0;
      for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
          mx += w[y][x] * a.at(y0 + y, x0 + x);
          my += w[y][x] * b.at(y0 + y, x0 + x);
        }
      double vx = 0, vy = 0, cov = 0;
      for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
          const double da = a.at(y0 + y, x0 + x) - mx;
          const double db = b.at(y0 + y, x0 + x) - my;
          vx += w[y][x] * da * da;
          vy += w[y][x] * db * db;
          cov += w[y][x] * da * db;
        }
      acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return acc / static_cast<double>(oh * ow);
}

double psnr_b(const Plane& ref, const Plane& test) {
  check_dims(ref, test, "psnr_b");
  if (ref.height < 16 || ref.width < 16)
    throw ArgumentError("psnr_b needs dims >= 16");
  constexpr int B = 8;
  // Squared differences of horizontally/vertically adjacent pixel pairs of
  // the test image, split into block-boundary pairs and interior pairs.
  double d_b = 0, d_bc = 0;
  std::int64_t n_b = 0, n_bc = 0;
  for (std::int64_t y = 0; y < test.height; ++y)
    for (std::int64_t x = 0; x + 1 < test.width; ++x) {
      const double d = static_cast<double>(test.at(y, x)) - test.at(y, x + 1);
      if ((x + 1) % B == 0) {
        d_b += d * d;
        ++n_b;
      } else {
        d_bc += d * d;
        ++n_bc;
      }
    }
  for (std::int64_t x = 0; x < test.width; ++x)
    for (std::int64_t y = 0; y + 1 < test.height; ++y) {
      const double d = static_cast<double>(test.at(y, x)) - test.at(y + 1, x);
      if ((y + 1) % B == 0) {
        d_b += d * d;
        ++n_b;
      } else {
        d_bc += d * d;
        ++n_bc;
      }
    }
  d_b /= static_cast<double>(n_b);
  d_bc /= static_cast<double>(n_bc);
  double bef = 0;
  if (d_b > d_bc) {
    const double eta =
        std::log2(static_cast<double>(B)) /
        std::log2(static_cast<double>(std::min(test.height, test.width)));
    bef = eta * (d_b - d_bc);
  }
  const double mse_b = mse_of(ref, test) + bef;
  if (mse_b == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse_b));
}

MetricReport evaluate_pair(const Plane& ref, const Plane& test) {
  MetricReport r;
  r.psnr = psnr(ref, test);
  r.ssim = ssim(ref, test);
  r.psnr_b = psnr_b(ref, test);
  return r;
}

}  // namespace oapt
