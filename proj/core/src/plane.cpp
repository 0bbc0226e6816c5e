#include "oapt/plane.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "oapt/errors.hpp"

namespace oapt {

Plane::Plane(std::int64_t h, std::int64_t w, std::uint8_t fill) {
  if (h <= 0 || w <= 0) throw ArgumentError("Plane dimensions must be positive");
  height = h;
  width = w;
  pixels.assign(static_cast<std::size_t>(h * w), fill);
}

std::vector<real> Plane::float_view() const {
  std::vector<real> v(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    v[i] = static_cast<real>(pixels[i]) - real(128);
  return v;
}

Tensor Plane::to_tensor01() const {
  Tensor t = Tensor::zeros({1, height, width});
  for (std::size_t i = 0; i < pixels.size(); ++i)
    t.data()[i] = static_cast<real>(pixels[i]) / real(255);
  return t;
}

Plane Plane::from_tensor01(const Tensor& t) {
  if (t.rank() != 3 || t.extent(0) != 1)
    throw DimensionError("from_tensor01 expects [1,H,W], got " + shape_str(t.shape()));
  Plane p(t.extent(1), t.extent(2));
  for (std::size_t i = 0; i < p.pixels.size(); ++i) {
    const real v = t.data()[i] * real(255);
    const real c = v < 0 ? 0 : (v > 255 ? 255 : v);
    p.pixels[i] = static_cast<std::uint8_t>(std::llround(c));
  }
  return p;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Plane read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open image: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw DataError("not a binary PGM (P5): " + path);
  auto skip_ws_comments = [&is]() {
    while (true) {
      const int c = is.peek();
      if (c == '#') {
        std::string line;
        std::getline(is, line);
      } else if (std::isspace(c)) {
        is.get();
      } else {
        break;
      }
    }
  };
  skip_ws_comments();
  std::int64_t w, h;
  int maxval;
  is >> w;
  skip_ws_comments();
  is >> h;
  skip_ws_comments();
  is >> maxval;
  if (!is || w <= 0 || h <= 0 || maxval != 255)
    throw DataError("unsupported PGM header in " + path);
  is.get();  // single whitespace before raster
  Plane p(h, w);
  is.read(reinterpret_cast<char*>(p.pixels.data()),
          static_cast<std::streamsize>(p.pixels.size()));
  if (!is) throw DataError("truncated PGM raster in " + path);
  return p;
}

void write_pgm(const std::string& path, const Plane& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open image for writing: " + path);
  os << "P5\n" << p.width << " " << p.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(p.pixels.data()),
           static_cast<std::streamsize>(p.pixels.size()));
  if (!os) throw DataError("write failure: " + path);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

Plane read_png(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw DataError("cannot open image: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw DataError("libpng init failure");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng read failure: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color & PNG_COLOR_MASK_COLOR || color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray(png, PNG_ERROR_ACTION_NONE, -1, -1);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const auto h = static_cast<std::int64_t>(png_get_image_height(png, info));
  const auto w = static_cast<std::int64_t>(png_get_image_width(png, info));
  Plane p(h, w);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (std::int64_t y = 0; y < h; ++y)
    rows[static_cast<std::size_t>(y)] = p.pixels.data() + y * w;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return p;
}

void write_png(const std::string& path, const Plane& p) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw DataError("cannot open image for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw DataError("libpng init failure");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng write failure: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(p.width), static_cast<png_uint_32>(p.height),
               8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(p.height));
  for (std::int64_t y = 0; y < p.height; ++y)
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(p.pixels.data() + y * p.width);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Plane read_image(const std::string& path) {
  if (ends_with(path, ".pgm")) return read_pgm(path);
  if (ends_with(path, ".png")) return read_png(path);
  throw DataError("unsupported image extension (want .pgm or .png): " + path);
}

void write_image(const std::string& path, const Plane& p) {
  if (ends_with(path, ".pgm")) return write_pgm(path, p);
  if (ends_with(path, ".png")) return write_png(path, p);
  throw DataError("unsupported image extension (want .pgm or .png): " + path);
}

}  // namespace oapt
