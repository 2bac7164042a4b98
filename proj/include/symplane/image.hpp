#pragma once

// 2D images and their file formats: 16-bit PGM for scalar images, PNG for
// RGB overlays and grayscale input.

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "symplane/common.hpp"

namespace symplane {

/// Scalar image, row-major with u (column) fastest.
struct Image2D {
  std::array<int, 2> dims{0, 0};  // width, height
  std::array<double, 2> spacing{1.0, 1.0};
  std::vector<float> data;

  Image2D() = default;
  Image2D(std::array<int, 2> d, std::array<double, 2> sp, float fill = 0.f) : dims(d), spacing(sp) {
    if (d[0] <= 0 || d[1] <= 0) throw ValidationError("image dims must be positive");
    data.assign(static_cast<std::size_t>(d[0]) * d[1], fill);
  }
  Image2D(std::array<int, 2> d, std::array<double, 2> sp, std::vector<float> values) : dims(d), spacing(sp), data(std::move(values)) {
    if (d[0] <= 0 || d[1] <= 0) throw ValidationError("image dims must be positive");
    if (data.size() != static_cast<std::size_t>(d[0]) * d[1])
      throw ValidationError("image data length does not match dims");
  }

  int width() const { return dims[0]; }
  int height() const { return dims[1]; }
  std::size_t size() const { return data.size(); }
  std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * dims[0] + u; }
  float at(int u, int v) const { return data[index(u, v)]; }
  float& at(int u, int v) { return data[index(u, v)]; }

  std::pair<float, float> range() const {
    auto [lo, hi] = std::minmax_element(data.begin(), data.end());
    return {*lo, *hi};
  }
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // RGBRGB..., row-major

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}
  std::uint8_t* pixel(int u, int v) { return &data[(static_cast<std::size_t>(v) * width + u) * 3]; }
  const std::uint8_t* pixel(int u, int v) const { return &data[(static_cast<std::size_t>(v) * width + u) * 3]; }
};

/// 2x2 box average; an odd trailing row/column is dropped.
inline Image2D downsample2(const Image2D& img) {
  const int w = std::max(1, img.width() / 2), h = std::max(1, img.height() / 2);
  const int fx = img.width() >= 2 ? 2 : 1, fy = img.height() >= 2 ? 2 : 1;
  Image2D out({w, h}, {img.spacing[0] * fx, img.spacing[1] * fy});
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      double acc = 0.0;
      for (int dy = 0; dy < fy; ++dy)
        for (int dx = 0; dx < fx; ++dx) acc += img.at(fx * u + dx, fy * v + dy);
      out.at(u, v) = static_cast<float>(acc / (fx * fy));
    }
  return out;
}

// --- PGM ----------------------------------------------------------------

/// Binary 16-bit PGM. Values are mapped linearly from [min, max] onto
/// [0, 65535]; the range is stored in a comment so read_pgm can undo it.
inline void write_pgm(const Image2D& img, const std::filesystem::path& path) {
  if (img.data.empty()) throw ValidationError("write_pgm: empty image");
  auto [lo, hi] = img.range();
  const double scale = hi > lo ? 65535.0 / (static_cast<double>(hi) - lo) : 0.0;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write PGM: " + path.string());
  char buf[128];
  std::snprintf(buf, sizeof buf, "P5\n# symplane-range %.9g %.9g\n%d %d\n65535\n", static_cast<double>(lo),
                static_cast<double>(hi), img.width(), img.height());
  os << buf;
  std::vector<unsigned char> bytes(img.size() * 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    auto q = static_cast<std::uint16_t>(std::lround((img.data[i] - static_cast<double>(lo)) * scale));
    bytes[2 * i] = static_cast<unsigned char>(q >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("failed writing PGM: " + path.string());
}

/// Reads binary PGM (8 or 16 bit). A symplane-range comment restores the
/// original intensity range; otherwise raw gray levels are returned.
inline Image2D read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open PGM: " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P5") throw ValidationError("not a binary PGM (P5): " + path.string());
  double lo = 0, hi = 0;
  bool ranged = false;
  int fields[3];
  int got = 0;
  while (got < 3) {
    is >> std::ws;
    if (is.peek() == '#') {
      std::string line;
      std::getline(is, line);
      std::istringstream ls(line);
      std::string hash, tag;
      ls >> hash >> tag;
      if (tag == "symplane-range" && (ls >> lo >> hi)) ranged = true;
      continue;
    }
    if (!(is >> fields[got])) throw ValidationError("malformed PGM header: " + path.string());
    ++got;
  }
  is.get();  // single whitespace before the raster
  const int w = fields[0], h = fields[1], maxval = fields[2];
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw ValidationError("malformed PGM header: " + path.string());
  const int bpp = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * bpp);
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!is) throw Error("truncated PGM raster: " + path.string());
  Image2D img({w, h}, {1.0, 1.0});
  for (std::size_t i = 0; i < img.size(); ++i) {
    double q = bpp == 2 ? (bytes[2 * i] << 8) | bytes[2 * i + 1] : bytes[i];
    img.data[i] = static_cast<float>(ranged ? lo + q / maxval * (hi - lo) : q);
  }
  return img;
}

// --- PNG ----------------------------------------------------------------

namespace detail {

struct PngFile {
  FILE* f = nullptr;
  ~PngFile() {
    if (f) std::fclose(f);
  }
};

[[noreturn]] inline void png_fail(png_structp png, png_const_charp msg) {
  (void)png;
  throw Error(std::string("libpng: ") + msg);
}

inline void png_warn(png_structp, png_const_charp) {}

}  // namespace detail

/// 8-bit RGB PNG. Fixed compression settings and no time/text chunks, so
/// identical images give identical files.
inline void write_png(const RgbImage& img, const std::filesystem::path& path) {
  if (img.width <= 0 || img.height <= 0) throw ValidationError("write_png: empty image");
  detail::PngFile file;
  file.f = std::fopen(path.c_str(), "wb");
  if (!file.f) throw Error("cannot write PNG: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_fail, detail::png_warn);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  if (!info) throw Error("png_create_info_struct failed");
  png_init_io(png, file.f);
  png_set_compression_level(png, 9);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int v = 0; v < img.height; ++v) png_write_row(png, const_cast<png_bytep>(img.pixel(0, v)));
  png_write_end(png, nullptr);
}

/// Reads any PNG as grayscale (RGB is converted with libpng's default
/// weights, 16-bit samples are kept at full precision).
inline Image2D read_png_gray(const std::filesystem::path& path) {
  detail::PngFile file;
  file.f = std::fopen(path.c_str(), "rb");
  if (!file.f) throw Error("cannot open PNG: " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.f) != 8 || png_sig_cmp(sig, 0, 8)) throw ValidationError("not a PNG file: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_fail, detail::png_warn);
  if (!png) throw Error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  if (!info) throw Error("png_create_info_struct failed");
  png_init_io(png, file.f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int ct = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (ct == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (ct == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (ct & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (ct == PNG_COLOR_TYPE_RGB || ct == PNG_COLOR_TYPE_RGB_ALPHA || ct == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (depth == 16) png_set_swap(png);  // little-endian uint16 rows
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> rows(rowbytes * static_cast<std::size_t>(h));
  for (int v = 0; v < h; ++v) png_read_row(png, rows.data() + rowbytes * v, nullptr);
  Image2D img({w, h}, {1.0, 1.0});
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const png_byte* r = rows.data() + rowbytes * v;
      img.at(u, v) = depth == 16 ? static_cast<float>(r[2 * u] | (r[2 * u + 1] << 8)) : static_cast<float>(r[u]);
    }
  return img;
}

}  // namespace symplane
