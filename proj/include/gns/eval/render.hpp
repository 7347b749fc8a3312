#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "gns/core/errors.hpp"
#include "gns/core/vec2.hpp"
#include "gns/data/scaling.hpp"

namespace gns::eval {

using Rgb = std::array<unsigned char, 3>;

struct Image {
  int width = 0, height = 0;
  std::vector<unsigned char> pixels;  // row-major RGB, row 0 at the top

  Image(int w, int h, Rgb fill = {255, 255, 255}) : width(w), height(h), pixels(std::size_t(w) * h * 3) {
    for (std::size_t i = 0; i < pixels.size(); i += 3) std::copy(fill.begin(), fill.end(), pixels.begin() + i);
  }
  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    std::copy(c.begin(), c.end(), pixels.begin() + (std::size_t(y) * width + x) * 3);
  }
  Rgb at(int x, int y) const {
    const auto* p = pixels.data() + (std::size_t(y) * width + x) * 3;
    return {p[0], p[1], p[2]};
  }
};

inline void write_png(const std::filesystem::path& path, const Image& img) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw DataError("failed to encode " + path.string());
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + std::size_t(y) * img.width * 3));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

struct RenderOptions {
  double pixels_per_unit = 500.0;
  int point_radius = 2;
  std::optional<double> guide_y;  // scaled height of a dashed horizontal guide
  Rgb fluid{30, 100, 220};
  Rgb obstacle{90, 90, 90};
  Rgb frame_color{0, 0, 0};
  Rgb guide{220, 30, 30};
};

/// Scatter plot of one frame in scaled coordinates: domain outline, fluid and
/// obstacle particles, and the optional guide line.
inline Image render_frame(std::span<const Vec2> positions, std::span<const ParticleType> types,
                          const data::ScaleMap& scale, const RenderOptions& opt = {}) {
  const double top = scale.upper().y + data::ScaleMap::lo;
  const double ppu = opt.pixels_per_unit;
  Image img(static_cast<int>(std::lround(ppu)), static_cast<int>(std::lround(top * ppu)));
  auto px = [&](double x) { return static_cast<int>(std::lround(x * ppu)); };
  auto py = [&](double y) { return img.height - 1 - static_cast<int>(std::lround(y * ppu)); };
  const Vec2 lo = scale.lower(), hi = scale.upper();
  for (int x = px(lo.x); x <= px(hi.x); ++x) {
    img.set(x, py(lo.y), opt.frame_color);
    img.set(x, py(hi.y), opt.frame_color);
  }
  for (int y = py(hi.y); y <= py(lo.y); ++y) {
    img.set(px(lo.x), y, opt.frame_color);
    img.set(px(hi.x), y, opt.frame_color);
  }
  auto dot = [&](Vec2 p, Rgb c) {
    const int cx = px(p.x), cy = py(p.y), r = opt.point_radius;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        if (dx * dx + dy * dy <= r * r) img.set(cx + dx, cy + dy, c);
  };
  for (std::size_t i = 0; i < positions.size(); ++i)
    if (types[i] != ParticleType::Fluid) dot(positions[i], opt.obstacle);
  for (std::size_t i = 0; i < positions.size(); ++i)
    if (types[i] == ParticleType::Fluid) dot(positions[i], opt.fluid);
  if (opt.guide_y) {
    const int y = py(*opt.guide_y);
    for (int x = px(lo.x); x <= px(hi.x); ++x)
      if ((x / 6) % 2 == 0) {
        img.set(x, y, opt.guide);
        img.set(x, y - 1, opt.guide);
      }
  }
  return img;
}

inline std::string frame_file_name(const std::string& prefix, std::size_t frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%05zu.png", frame);
  return prefix + buf;
}

}  // namespace gns::eval
