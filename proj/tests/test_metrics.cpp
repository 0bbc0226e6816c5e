#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oapt/degrade.hpp"
#include "oapt/metrics.hpp"
#include "oapt/nn.hpp"
#include "oapt/ops.hpp"
#include "oapt/rng.hpp"

using namespace oapt;

namespace {

Plane random_plane(std::int64_t h, std::int64_t w, std::uint64_t seed) {
  Rng rng(seed);
  Plane p(h, w);
  for (auto& v : p.pixels) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return p;
}

}  // namespace

TEST_CASE("psnr: cap, closed form for unit difference, independent recomputation") {
  const Plane a = random_plane(32, 32, 1);
  CHECK(psnr(a, a) == 99.0);

  Plane b = a;
  for (auto& v : b.pixels) v = static_cast<std::uint8_t>(v < 255 ? v + 1 : v - 1);
  CHECK(psnr(a, b) == doctest::Approx(48.1308).epsilon(1e-4));

  for (int k = 0; k < 5; ++k) {
    const Plane x = random_plane(24, 40, 10 + static_cast<std::uint64_t>(k));
    const Plane y = random_plane(24, 40, 20 + static_cast<std::uint64_t>(k));
    double mse = 0;
    for (std::size_t i = 0; i < x.pixels.size(); ++i) {
      const double d = double(x.pixels[i]) - double(y.pixels[i]);
      mse += d * d;
    }
    mse /= static_cast<double>(x.pixels.size());
    CHECK(psnr(x, y) == doctest::Approx(10 * std::log10(255.0 * 255.0 / mse)).epsilon(1e-9));
  }

  CHECK_THROWS_AS(psnr(Plane(8, 8), Plane(8, 9)), ArgumentError);
}

TEST_CASE("ssim: identity, inversion sign, minimum size") {
  const Plane img = make_test_image(64, 64, 7);
  CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));

  Plane inv = img;
  for (auto& v : inv.pixels) v = static_cast<std::uint8_t>(255 - v);
  CHECK(ssim(img, inv) < 0);  // structure anti-correlated

  CHECK_THROWS_AS(ssim(Plane(10, 64), Plane(10, 64)), ArgumentError);
}

TEST_CASE("psnr_b: boundary-neutral image, blocky penalty, asymmetry") {
  // Smooth horizontal ramp: differences are constant everywhere, so the
  // blocking factor vanishes.
  Plane ramp(32, 32);
  for (std::int64_t y = 0; y < 32; ++y)
    for (std::int64_t x = 0; x < 32; ++x)
      ramp.at(y, x) = static_cast<std::uint8_t>(4 * x + y);
  Plane ref = ramp;
  for (auto& v : ref.pixels) v = static_cast<std::uint8_t>(v + 2);
  CHECK(std::abs(psnr_b(ref, ramp) - psnr(ref, ramp)) < 0.01);

  // Constant 8x8 tiles of alternating values: maximal blocking.
  Plane blocky(32, 32);
  for (std::int64_t y = 0; y < 32; ++y)
    for (std::int64_t x = 0; x < 32; ++x)
      blocky.at(y, x) = ((y / 8 + x / 8) % 2) ? 180 : 80;
  const Plane smooth = make_test_image(32, 32, 3);
  CHECK(psnr_b(smooth, blocky) < psnr(smooth, blocky));

  // BEF is computed on the test image only, so swapping arguments matters.
  CHECK(psnr_b(smooth, blocky) != psnr_b(blocky, smooth));

  // zero error but heavy blockiness: the blocking term alone caps the score
  CHECK(psnr_b(blocky, blocky) < 20.0);
  CHECK(psnr_b(ramp, ramp) == 99.0);
  CHECK_THROWS_AS(psnr_b(Plane(12, 32), Plane(12, 32)), ArgumentError);
}

TEST_CASE("psnr_b never exceeds psnr") {
  for (int k = 0; k < 100; ++k) {
    const Plane a = random_plane(24, 24, 1000 + static_cast<std::uint64_t>(k));
    const Plane b = random_plane(24, 24, 2000 + static_cast<std::uint64_t>(k));
    CHECK(psnr_b(a, b) <= psnr(a, b));
  }
}

TEST_CASE("charbonnier: exact floor, asymptotic slope, smooth at zero") {
  Rng rng(5);
  std::vector<real> v(64);
  for (auto& x : v) x = rng.normal();
  const Tensor t = Tensor::from_data({64}, v);
  CHECK(ops::charbonnier(t, t).item() == 1e-3);  // sqrt(eps^2) exactly

  const real d = 10.0;
  const Tensor big = Tensor::from_data({1}, {d});
  const real loss = ops::charbonnier(big, Tensor::zeros({1})).item();
  CHECK(std::abs(loss - d) < 1e-6 * 1e-6 / (2 * d) + 1e-7);
  CHECK(loss > d);  // sqrt(d^2 + eps^2) > d

  // gradient at zero difference is exactly zero
  Tape tape;
  ParamStore ps;
  Tensor x = ps.add("x", {4}, tape);
  x.data() = {1, 2, 3, 4};
  tape.backward(ops::charbonnier(x, Tensor::from_data({4}, {1, 2, 3, 4})));
  for (const real g : x.grad()) CHECK(g == 0);
}

TEST_CASE("charbonnier shape mismatch") {
  CHECK_THROWS_AS(ops::charbonnier(Tensor::zeros({3}), Tensor::zeros({4})), DimensionError);
}

TEST_CASE("metric report bundles all three metrics") {
  const Plane img = make_test_image(48, 48, 9);
  const Plane deg = jpeg_compress(img, 20);
  const MetricReport m = evaluate_pair(img, deg);
  CHECK(m.psnr == psnr(img, deg));
  CHECK(m.ssim == ssim(img, deg));
  CHECK(m.psnr_b == psnr_b(img, deg));
  CHECK(m.psnr_b <= m.psnr);
  CHECK(m.ssim < 1.0);
}
