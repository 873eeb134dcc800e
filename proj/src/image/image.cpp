#include "teleimp/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "teleimp/error.hpp"

namespace teleimp {

Image::Image(int w, int h, Rgb fill) : width(w), height(h) {
  if (w < 0 || h < 0) throw Error(ErrorKind::Image, "negative image size");
  pixels.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill.r;
    pixels[i + 1] = fill.g;
    pixels[i + 2] = fill.b;
  }
}

Rgb Image::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  pixels[i] = c.r;
  pixels[i + 1] = c.g;
  pixels[i + 2] = c.b;
}

namespace {

void write_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

void flush_cb(png_structp) {}

struct Reader {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

void read_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* r = static_cast<Reader*>(png_get_io_ptr(png));
  if (r->pos + len > r->bytes->size()) png_error(png, "truncated png");
  std::memcpy(data, r->bytes->data() + r->pos, len);
  r->pos += len;
}

[[noreturn]] void error_cb(png_structp png, png_const_charp msg) {
  *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
  png_longjmp(png, 1);
}

void warn_cb(png_structp, png_const_charp) {}

}  // namespace

// libpng reports errors via longjmp; every object with a destructor is
// declared before setjmp so the jump never skips a constructor.
std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.empty()) throw Error(ErrorKind::Image, "cannot encode empty image");
  std::vector<std::uint8_t> out;
  std::string err;
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y)
    rows[y] = const_cast<png_bytep>(image.pixels.data() + static_cast<std::size_t>(y) * image.width * 3);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, error_cb, warn_cb);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Image, "png writer allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Image, "png encode: " + err);
  }
  png_set_write_fn(png, &out, write_cb, flush_cb);
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw Error(ErrorKind::Image, "not a png stream");
  std::string err;
  Reader reader{&bytes, 0};
  Image img;
  std::vector<png_bytep> rows;

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, error_cb, warn_cb);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::Image, "png reader allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::Image, "png decode: " + err);
  }
  png_set_read_fn(png, &reader, read_cb);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(w) * 3) png_error(png, "unexpected row layout");
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = img.pixels.data() + static_cast<std::size_t>(y) * w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

Image load_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

void save_png(const Image& image, const std::string& path) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path);
}

Image resize_area(const Image& image, int width, int height) {
  if (image.empty() || width <= 0 || height <= 0) throw Error(ErrorKind::Image, "bad resize");
  if (width == image.width && height == image.height) return image;
  Image out(width, height);
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  // source span and overlap weight of every output column / row
  struct Tap {
    int index;
    double weight;
  };
  auto spans = [](int n_out, int n_in, double scale) {
    std::vector<std::vector<Tap>> out(static_cast<std::size_t>(n_out));
    for (int o = 0; o < n_out; ++o) {
      const double a = o * scale, b = (o + 1) * scale;
      for (int i = static_cast<int>(a); i < std::min<int>(n_in, static_cast<int>(std::ceil(b))); ++i)
        out[static_cast<std::size_t>(o)].push_back({i, std::min<double>(i + 1, b) - std::max<double>(i, a)});
    }
    return out;
  };
  const auto xs = spans(width, image.width, sx);
  const auto ys = spans(height, image.height, sy);
  const std::uint8_t* src = image.pixels.data();
  const auto stride = static_cast<std::size_t>(image.width) * 3;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc[3] = {0, 0, 0};
      double area = 0;
      for (const auto& ty : ys[static_cast<std::size_t>(y)]) {
        const std::uint8_t* row = src + static_cast<std::size_t>(ty.index) * stride;
        for (const auto& tx : xs[static_cast<std::size_t>(x)]) {
          const double w = ty.weight * tx.weight;
          const std::uint8_t* px = row + static_cast<std::size_t>(tx.index) * 3;
          acc[0] += w * px[0];
          acc[1] += w * px[1];
          acc[2] += w * px[2];
          area += w;
        }
      }
      auto q = [&](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v / area), 0L, 255L)); };
      std::uint8_t* dst = out.pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
      dst[0] = q(acc[0]);
      dst[1] = q(acc[1]);
      dst[2] = q(acc[2]);
    }
  }
  return out;
}

Image pad_to(const Image& image, int width, int height, Rgb fill) {
  if (image.width == width && image.height == height) return image;
  Image out(width, height, fill);
  const int ox = (width - image.width) / 2;
  const int oy = (height - image.height) / 2;
  for (int y = 0; y < image.height; ++y) {
    const int ty = y + oy;
    if (ty < 0 || ty >= height) continue;
    for (int x = 0; x < image.width; ++x) {
      const int tx = x + ox;
      if (tx >= 0 && tx < width) out.set(tx, ty, image.at(x, y));
    }
  }
  return out;
}

void draw_ring(Image& image, double cx, double cy, double radius, double stroke, Rgb color) {
  const double reach = radius + stroke / 2 + 1;
  const int x_lo = std::max(0, static_cast<int>(std::floor(cx - reach)));
  const int x_hi = std::min(image.width - 1, static_cast<int>(std::ceil(cx + reach)));
  const int y_lo = std::max(0, static_cast<int>(std::floor(cy - reach)));
  const int y_hi = std::min(image.height - 1, static_cast<int>(std::ceil(cy + reach)));
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
      if (std::abs(d - radius) <= stroke / 2) image.set(x, y, color);
    }
  }
}

}  // namespace teleimp
