#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oapt/degrade.hpp"
#include "oapt/jpeg.hpp"
#include "oapt/metrics.hpp"
#include "oapt/rng.hpp"

using namespace oapt;

namespace {

// Independent scalar PSNR used to cross-check the metrics module.
double psnr_oracle(const Plane& a, const Plane& b) {
  double mse = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = double(a.pixels[i]) - double(b.pixels[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.pixels.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace

TEST_CASE("quantization tables at the reference quality factors") {
  const QuantTable q50 = quant_table_for_qf(50);
  const int first_row[8] = {16, 11, 10, 16, 24, 40, 51, 61};
  for (int v = 0; v < 8; ++v) CHECK(q50.at(0, v) == first_row[v]);

  const QuantTable q100 = quant_table_for_qf(100);
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) CHECK(q100.at(u, v) == 1);

  CHECK(quant_table_for_qf(10).at(0, 0) == 80);  // floor((16*500+50)/100)
}

TEST_CASE("quantization tables are entrywise monotone in quality factor") {
  for (int qf = 1; qf < 100; ++qf) {
    const QuantTable lo = quant_table_for_qf(qf);
    const QuantTable hi = quant_table_for_qf(qf + 1);
    for (int i = 0; i < 64; ++i) {
      CHECK(lo.q[static_cast<std::size_t>(i)] >= hi.q[static_cast<std::size_t>(i)]);
      CHECK(lo.q[static_cast<std::size_t>(i)] >= 1);
      CHECK(lo.q[static_cast<std::size_t>(i)] <= 255);
    }
  }
  CHECK_THROWS_AS(quant_table_for_qf(0), ArgumentError);
  CHECK_THROWS_AS(quant_table_for_qf(101), ArgumentError);
}

TEST_CASE("dct of a constant block and orthonormal round trip") {
  real block[64], freq[64], back[64];
  for (auto& v : block) v = 3.25;
  dct8x8(block, freq);
  CHECK(freq[0] == doctest::Approx(8 * 3.25).epsilon(1e-12));
  for (int i = 1; i < 64; ++i) CHECK(std::abs(freq[i]) < 1e-10);

  Rng rng(13);
  real e_in = 0, e_out = 0;
  for (auto& v : block) v = rng.normal() * 40;
  dct8x8(block, freq);
  idct8x8(freq, back);
  for (int i = 0; i < 64; ++i) {
    CHECK(std::abs(back[i] - block[i]) < 1e-6);
    e_in += block[i] * block[i];
    e_out += freq[i] * freq[i];
  }
  CHECK(std::abs(e_in - e_out) < 1e-6);  // Parseval
}

TEST_CASE("qf 100 round trip stays above 50 dB on textured images") {
  for (int k = 0; k < 5; ++k) {
    const Plane img = make_test_image(96, 96, 100 + static_cast<std::uint64_t>(k));
    CHECK(psnr(img, jpeg_compress(img, 100)) > 50.0);
  }
}

TEST_CASE("constant images stay constant; 128 is a fixed point at any qf") {
  // DC of 128 is zero, so it survives any quantization step exactly
  Plane mid(32, 40, 128);
  for (int qf : {5, 10, 50, 90}) CHECK(jpeg_compress(mid, qf) == mid);

  // other constants shift by at most the DC quantization error but stay flat
  Plane c(32, 40, 173);
  for (int qf : {5, 50, 90}) {
    const Plane out = jpeg_compress(c, qf);
    for (const auto p : out.pixels) CHECK(p == out.pixels[0]);
    CHECK(std::abs(int(out.pixels[0]) - 173) <= 10);
  }
}

TEST_CASE("qf 10 on a checkerboard loses energy; PSNR matches an independent recomputation") {
  Plane board(32, 32);
  for (std::int64_t y = 0; y < 32; ++y)
    for (std::int64_t x = 0; x < 32; ++x) board.at(y, x) = ((y + x) % 2) ? 230 : 30;
  const Plane out = jpeg_compress(board, 10);
  const double db = psnr(board, out);
  CHECK(db < 25.0);  // the highest-frequency mode is heavily quantized at qf 10
  CHECK(db == doctest::Approx(psnr_oracle(board, out)).epsilon(1e-9));
}

TEST_CASE("coefficients of a flat 128 image are all zero") {
  const CoeffGrid g = quantized_coeffs(Plane(16, 16, 128), 50);
  for (auto c : g.coeffs) CHECK(c == 0);
}

TEST_CASE("decoding the coefficient grid reproduces jpeg_compress bit-exactly") {
  const Plane img = make_test_image(50, 43, 7);  // non-multiple-of-8 on purpose
  for (int qf : {10, 50, 90})
    CHECK(decode_coeffs(quantized_coeffs(img, qf)) == jpeg_compress(img, qf));
}

TEST_CASE("aligned recompression at the same qf is nearly idempotent") {
  // Fraction of blocks whose quantized coefficients change on the second
  // pass, measured once on this corpus and frozen as a fixture.
  std::int64_t changed = 0, total = 0;
  for (int k = 0; k < 4; ++k) {
    const Plane img = make_test_image(96, 96, 300 + static_cast<std::uint64_t>(k));
    for (int qf : {30, 50, 75}) {
      const CoeffGrid first = quantized_coeffs(img, qf);
      const CoeffGrid second = quantized_coeffs(decode_coeffs(first), qf);
      for (std::int64_t bi = 0; bi < first.blocks_h * first.blocks_w; ++bi) {
        bool diff = false;
        for (int i = 0; i < 64; ++i)
          if (first.coeffs[static_cast<std::size_t>(bi * 64 + i)] !=
              second.coeffs[static_cast<std::size_t>(bi * 64 + i)]) {
            diff = true;
            break;
          }
        changed += diff ? 1 : 0;
        total += 1;
      }
    }
  }
  const double frac = static_cast<double>(changed) / static_cast<double>(total);
  CHECK(frac < 0.02);
}

TEST_CASE("compression commutes with a translation of exactly 8 pixels") {
  const Plane img = make_test_image(64, 72, 31);
  const int qf = 35;
  // shift by one full block column, compress, compare interiors
  Plane shifted(64, 64);
  for (std::int64_t y = 0; y < 64; ++y)
    for (std::int64_t x = 0; x < 64; ++x) shifted.at(y, x) = img.at(y, x + 8);
  const Plane a = jpeg_compress(img, qf);
  const Plane b = jpeg_compress(shifted, qf);
  for (std::int64_t y = 0; y < 64; ++y)
    for (std::int64_t x = 0; x < 64; ++x) CHECK(a.at(y, x + 8) == b.at(y, x));
}

TEST_CASE("output planes are always valid byte images") {
  Rng rng(77);
  Plane noisy(24, 24);
  for (auto& p : noisy.pixels)
    p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  const Plane out = jpeg_compress(noisy, 5);
  CHECK(out.height == 24);
  CHECK(out.width == 24);
  CHECK(out.pixels.size() == 24 * 24);
}
