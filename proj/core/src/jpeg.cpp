#include "oapt/jpeg.hpp"

#include <algorithm>
#include <cmath>

#include "oapt/errors.hpp"

namespace oapt {

namespace {

// JPEG Annex K luminance quantization base table.
constexpr int kBaseLuma[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99,
};

struct DctBasis {
  real c[8][8];  // c[u][x] = a(u) cos((2x+1) u pi / 16)
  DctBasis() {
    const real pi = 3.14159265358979323846;
    for (int u = 0; u < 8; ++u) {
      const real a = u == 0 ? std::sqrt(real(1) / 8) : std::sqrt(real(2) / 8);
      for (int x = 0; x < 8; ++x)
        c[u][x] = a * std::cos((2 * x + 1) * u * pi / 16);
    }
  }
};

const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

real round_half_away(real v) {
  return v >= 0 ? std::floor(v + real(0.5)) : std::ceil(v - real(0.5));
}

Plane pad_to_blocks(const Plane& p) {
  const std::int64_t H = (p.height + 7) / 8 * 8;
  const std::int64_t W = (p.width + 7) / 8 * 8;
  if (H == p.height && W == p.width) return p;
  Plane out(H, W);
  for (std::int64_t y = 0; y < H; ++y) {
    const std::int64_t sy = std::min(y, p.height - 1);
    for (std::int64_t x = 0; x < W; ++x)
      out.at(y, x) = p.at(sy, std::min(x, p.width - 1));
  }
  return out;
}

}  // namespace

QuantTable quant_table_for_qf(int qf) {
  if (qf < 1 || qf > 100)
    throw ArgumentError("quality factor must be in [1,100], got " + std::to_string(qf));
  const int scale = qf < 50 ? 5000 / qf : 200 - 2 * qf;
  QuantTable t;
  for (int i = 0; i < 64; ++i) {
    const int v = (kBaseLuma[i] * scale + 50) / 100;
    t.q[static_cast<std::size_t>(i)] = std::clamp(v, 1, 255);
  }
  return t;
}

void dct8x8(const real in[64], real out[64]) {
  const auto& b = basis();
  real tmp[64];
  // rows: tmp[y][v] = sum_x in[y][x] c[v][x]
  for (int y = 0; y < 8; ++y)
    for (int v = 0; v < 8; ++v) {
      real acc = 0;
      for (int x = 0; x < 8; ++x) acc += in[y * 8 + x] * b.c[v][x];
      tmp[y * 8 + v] = acc;
    }
  // cols: out[u][v] = sum_y tmp[y][v] c[u][y]
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      real acc = 0;
      for (int y = 0; y < 8; ++y) acc += tmp[y * 8 + v] * b.c[u][y];
      out[u * 8 + v] = acc;
    }
}

void idct8x8(const real in[64], real out[64]) {
  const auto& b = basis();
  real tmp[64];
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x) {
      real acc = 0;
      for (int v = 0; v < 8; ++v) acc += in[u * 8 + v] * b.c[v][x];
      tmp[u * 8 + x] = acc;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      real acc = 0;
      for (int u = 0; u < 8; ++u) acc += tmp[u * 8 + x] * b.c[u][y];
      out[y * 8 + x] = acc;
    }
}

CoeffGrid quantized_coeffs(const Plane& p, int qf) {
  const QuantTable qt = quant_table_for_qf(qf);
  const Plane padded = pad_to_blocks(p);
  CoeffGrid grid;
  grid.blocks_h = padded.height / 8;
  grid.blocks_w = padded.width / 8;
  grid.orig_h = p.height;
  grid.orig_w = p.width;
  grid.qf = qf;
  grid.coeffs.resize(static_cast<std::size_t>(grid.blocks_h * grid.blocks_w * 64));
  real block[64], freq[64];
  for (std::int64_t by = 0; by < grid.blocks_h; ++by)
    for (std::int64_t bx = 0; bx < grid.blocks_w; ++bx) {
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          block[y * 8 + x] =
              static_cast<real>(padded.at(by * 8 + y, bx * 8 + x)) - real(128);
      dct8x8(block, freq);
      std::int32_t* out = grid.coeffs.data() + (by * grid.blocks_w + bx) * 64;
      for (int i = 0; i < 64; ++i)
        out[i] = static_cast<std::int32_t>(
            round_half_away(freq[i] / static_cast<real>(qt.q[static_cast<std::size_t>(i)])));
    }
  return grid;
}

Plane decode_coeffs(const CoeffGrid& grid) {
  const QuantTable qt = quant_table_for_qf(grid.qf);
  Plane padded(grid.blocks_h * 8, grid.blocks_w * 8);
  real freq[64], block[64];
  for (std::int64_t by = 0; by < grid.blocks_h; ++by)
    for (std::int64_t bx = 0; bx < grid.blocks_w; ++bx) {
      const std::int32_t* in = grid.coeffs.data() + (by * grid.blocks_w + bx) * 64;
      for (int i = 0; i < 64; ++i)
        freq[i] = static_cast<real>(in[i]) * static_cast<real>(qt.q[static_cast<std::size_t>(i)]);
      idct8x8(freq, block);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const real v = block[y * 8 + x] + real(128);
          const real c = v < 0 ? 0 : (v > 255 ? 255 : v);
          padded.at(by * 8 + y, bx * 8 + x) =
              static_cast<std::uint8_t>(round_half_away(c));
        }
    }
  if (padded.height == grid.orig_h && padded.width == grid.orig_w) return padded;
  Plane out(grid.orig_h, grid.orig_w);
  for (std::int64_t y = 0; y < out.height; ++y)
    for (std::int64_t x = 0; x < out.width; ++x) out.at(y, x) = padded.at(y, x);
  return out;
}

Plane jpeg_compress(const Plane& p, int qf) {
  return decode_coeffs(quantized_coeffs(p, qf));
}

}  // namespace oapt
