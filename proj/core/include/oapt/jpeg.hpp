#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "oapt/plane.hpp"

namespace oapt {

// 8x8 quantization divisors, entries in [1, 255].
struct QuantTable {
  std::array<int, 64> q{};
  int at(int u, int v) const { return q[static_cast<std::size_t>(u * 8 + v)]; }
};

// IJG scaling of the Annex-K luminance base table:
//   scale = 5000/qf (qf < 50) else 200 - 2*qf
//   entry = clamp(floor((base*scale + 50)/100), 1, 255)
QuantTable quant_table_for_qf(int qf);

// Orthonormal type-II 8x8 DCT and its inverse.
void dct8x8(const real in[64], real out[64]);
void idct8x8(const real in[64], real out[64]);

// Quantized DCT coefficients of every 8x8 block (after replicate padding to
// block multiples). jpeg_compress is exactly dequantize + IDCT of this.
struct CoeffGrid {
  std::int64_t blocks_h = 0;
  std::int64_t blocks_w = 0;
  std::int64_t orig_h = 0;
  std::int64_t orig_w = 0;
  int qf = 0;
  std::vector<std::int32_t> coeffs;  // blocks_h * blocks_w * 64, block raster order

  bool operator==(const CoeffGrid& o) const = default;
};

CoeffGrid quantized_coeffs(const Plane& p, int qf);
Plane decode_coeffs(const CoeffGrid& grid);

// The lossy core of JPEG: level shift, block DCT, quantize (round half away
// from zero), dequantize, IDCT, clamp. No entropy coding.
Plane jpeg_compress(const Plane& p, int qf);

}  // namespace oapt
