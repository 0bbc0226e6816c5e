#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oapt/degrade.hpp"
#include "oapt/gradcheck.hpp"
#include "oapt/ops.hpp"
#include "oapt/predictor.hpp"
#include "oapt/rng.hpp"

using namespace oapt;

TEST_CASE("input crop takes the top-left corner and replicate-pads small images") {
  Plane big(60, 60);
  for (std::int64_t y = 0; y < 60; ++y)
    for (std::int64_t x = 0; x < 60; ++x)
      big.at(y, x) = static_cast<std::uint8_t>((3 * y + x) % 251);
  const Plane c = crop_input(big);
  CHECK(c.height == 44);
  CHECK(c.width == 44);
  for (std::int64_t y = 0; y < 44; ++y)
    for (std::int64_t x = 0; x < 44; ++x) CHECK(c.at(y, x) == big.at(y, x));

  Plane small(20, 30);
  for (std::int64_t y = 0; y < 20; ++y)
    for (std::int64_t x = 0; x < 30; ++x)
      small.at(y, x) = static_cast<std::uint8_t>(y * 30 + x);
  const Plane p = crop_input(small);
  CHECK(p.height == 44);
  CHECK(p.width == 44);
  CHECK(p.at(5, 7) == small.at(5, 7));
  CHECK(p.at(30, 7) == small.at(19, 7));   // rows clamp to the last row
  CHECK(p.at(5, 40) == small.at(5, 29));   // columns clamp to the last column
  CHECK(p.at(43, 43) == small.at(19, 29));
}

TEST_CASE("offset quantization: center, saturation, thresholds, monotonicity") {
  // sigmoid(0) = 0.5, 0.5 * 7 = 3.5 rounds away from zero to 4
  CHECK(quantize_offsets(0, 0) == std::pair<int, int>{4, 4});
  CHECK(quantize_offsets(-50, 50) == std::pair<int, int>{0, 7});

  // logit(3/7): sigmoid gives exactly 3/7, times 7 is exactly 3
  const double logit_3_7 = std::log(3.0 / 4.0);
  CHECK(quantize_offsets(logit_3_7, logit_3_7).first == 3);

  int prev = 0;
  for (double raw = -8; raw <= 8; raw += 0.125) {
    const int r = quantize_offsets(raw, 0).first;
    CHECK(r >= prev);
    CHECK(r >= 0);
    CHECK(r <= 7);
    prev = r;
  }
}

TEST_CASE("training loss is the L1 gap of the scaled sigmoid") {
  const Tensor raw = Tensor::from_data({2}, {0.0, -50.0});
  // predictions before rounding: 3.5 and ~0; labels 4 and 2; summed gaps
  const real loss = offset_loss(raw, 4, 2).item();
  CHECK(loss == doctest::Approx(0.5 + 2.0).epsilon(1e-6));

  const Tensor exact = Tensor::from_data({2}, {std::log(3.0 / 4.0), std::log(3.0 / 4.0)});
  CHECK(offset_loss(exact, 3, 3).item() == doctest::Approx(0).epsilon(1e-9));

  CHECK_THROWS_AS(offset_loss(raw, 8, 0), ArgumentError);
  CHECK_THROWS_AS(offset_loss(raw, 0, -1), ArgumentError);
  CHECK_THROWS_AS(offset_loss(Tensor::zeros({3}), 0, 0), DimensionError);
}

TEST_CASE("predictor output shape, determinism and offset range") {
  PredictorConfig cfg;
  cfg.d_resblocks = 2;
  cfg.base_channels = 4;
  cfg.max_channels = 8;
  Tape tape;
  OffsetPredictor net(cfg, tape, 3);

  const Plane img = make_test_image(48, 48, 21);
  const OffsetPrediction a = net.predict(img);
  const OffsetPrediction b = net.predict(img);
  CHECK(a.raw_r == b.raw_r);
  CHECK(a.r == b.r);
  CHECK(a.r >= 0);
  CHECK(a.r <= 7);
  CHECK(a.c >= 0);
  CHECK(a.c <= 7);
  CHECK(quantize_offsets(a.raw_r, a.raw_c) == std::pair<int, int>{a.r, a.c});
}

TEST_CASE("prediction is invariant to pixels outside the crop") {
  PredictorConfig cfg;
  cfg.d_resblocks = 2;
  cfg.base_channels = 4;
  cfg.max_channels = 8;
  Tape tape;
  OffsetPredictor net(cfg, tape, 4);

  Plane img = make_test_image(64, 64, 22);
  const OffsetPrediction before = net.predict(img);
  for (std::int64_t y = 50; y < 64; ++y)
    for (std::int64_t x = 0; x < 64; ++x) img.at(y, x) = 0;
  const OffsetPrediction after = net.predict(img);
  CHECK(before.raw_r == after.raw_r);
  CHECK(before.raw_c == after.raw_c);
}

TEST_CASE("boundary-gradient statistic recovers the offsets from degraded pixels") {
  // The first compression leaves a ridge in the pixel differences along the
  // removed grid: boundaries sit at positions congruent to (8-offset) mod 8.
  // Argmax of the per-phase mean absolute difference recovers each offset
  // exactly in the easy regime, which is the signal the predictor CNN learns.
  auto phase_argmax = [](const double sum[8], const std::int64_t cnt[8]) {
    int best = 0;
    double best_v = -1;
    for (int p = 0; p < 8; ++p) {
      const double v = cnt[p] > 0 ? sum[p] / static_cast<double>(cnt[p]) : 0;
      if (v > best_v) {
        best_v = v;
        best = p;
      }
    }
    return best;
  };
  Rng rng(424242);
  for (int trial = 0; trial < 12; ++trial) {
    CompressionSpec spec{10, 90, static_cast<int>(rng.uniform_int(0, 7)),
                         static_cast<int>(rng.uniform_int(0, 7))};
    const Plane src = make_test_image(72, 72, 900 + static_cast<std::uint64_t>(trial));
    const DegradedPair pair = double_jpeg(src, spec);
    double col_sum[8] = {}, row_sum[8] = {};
    std::int64_t col_cnt[8] = {}, row_cnt[8] = {};
    for (std::int64_t y = 0; y < pair.lq.height; ++y)
      for (std::int64_t x = 1; x < pair.lq.width; ++x) {
        col_sum[x % 8] += std::abs(static_cast<int>(pair.lq.at(y, x)) - pair.lq.at(y, x - 1));
        ++col_cnt[x % 8];
      }
    for (std::int64_t y = 1; y < pair.lq.height; ++y)
      for (std::int64_t x = 0; x < pair.lq.width; ++x) {
        row_sum[y % 8] += std::abs(static_cast<int>(pair.lq.at(y, x)) - pair.lq.at(y - 1, x));
        ++row_cnt[y % 8];
      }
    CHECK((8 - phase_argmax(row_sum, row_cnt)) % 8 == spec.row_offset);
    CHECK((8 - phase_argmax(col_sum, col_cnt)) % 8 == spec.col_offset);
  }
}

TEST_CASE("gradients flow end to end through a tiny predictor") {
  PredictorConfig cfg;
  cfg.d_resblocks = 1;
  cfg.base_channels = 2;
  cfg.max_channels = 4;
  cfg.stride2_stages = 1;
  Tape tape;
  OffsetPredictor net(cfg, tape, 5);

  Rng rng(6);
  std::vector<real> v(44 * 44);
  for (auto& x : v) x = rng.uniform();
  const Tensor patch = Tensor::from_data({1, 44, 44}, v);

  const Tensor loss = offset_loss(net.forward_raw(patch), 2, 6);
  tape.backward(loss);

  int nonzero_params = 0;
  for (const auto& [name, t] : net.params().items()) {
    bool any = false;
    for (const real g : t.grad())
      if (g != 0) any = true;
    if (any) ++nonzero_params;
  }
  // every parameter tensor should receive gradient (L1 is nonsmooth only at
  // exact zero gap, which random init never hits)
  CHECK(nonzero_params == static_cast<int>(net.params().items().size()));
}

TEST_CASE("numerical gradient check through the head on a micro predictor") {
  PredictorConfig cfg;
  cfg.d_resblocks = 1;
  cfg.base_channels = 2;
  cfg.max_channels = 2;
  cfg.stride2_stages = 1;
  Tape tape;
  OffsetPredictor net(cfg, tape, 7);

  Rng rng(8);
  std::vector<real> v(44 * 44);
  for (auto& x : v) x = rng.uniform();
  const Tensor patch = Tensor::from_data({1, 44, 44}, v);

  const GradCheckReport rep = gradcheck(
      [&] {
        Tensor raw = net.forward_raw(patch);
        return ops::sum(ops::mul(raw, raw));
      },
      net.params(), tape, 1e-4, 5e-3);
  CHECK(rep.passed);
}
