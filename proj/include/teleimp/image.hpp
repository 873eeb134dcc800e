#pragma once

// Minimal RGB raster with PNG codec and the few drawing/resampling helpers
// the pipeline needs.

#include <cstdint>
#include <string>
#include <vector>

namespace teleimp {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // RGB, row-major, 3 bytes per pixel

  Image() = default;
  Image(int w, int h, Rgb fill = {});

  bool empty() const { return width <= 0 || height <= 0; }
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  bool operator==(const Image&) const = default;
};

/// Throws Error{Image} on malformed input.
std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(const std::vector<std::uint8_t>& bytes);
Image load_png(const std::string& path);
void save_png(const Image& image, const std::string& path);

/// Area-averaging resample.
Image resize_area(const Image& image, int width, int height);

/// Centers `image` on a `width` x `height` canvas, cropping if larger.
Image pad_to(const Image& image, int width, int height, Rgb fill = {});

/// Anti-aliasing-free ring: pixels whose center lies within stroke/2 of the
/// circle of `radius` around (cx, cy).
void draw_ring(Image& image, double cx, double cy, double radius, double stroke, Rgb color);

}  // namespace teleimp
