#include "ierd/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

namespace ierd {

Tensor ImagePlane::to_tensor() const {
  return Tensor::from_values({1, channels, height, width}, values);
}

ImagePlane ImagePlane::from_tensor(const Tensor& t, std::size_t n) {
  const Shape s = t.shape();
  if (n >= s.n) throw std::out_of_range("ImagePlane::from_tensor: batch index out of range");
  ImagePlane img(s.c, s.h, s.w);
  std::copy(t.plane(n, 0), t.plane(n, 0) + s.c * s.plane(), img.values.begin());
  return img;
}

void ImagePlane::clamp01() {
  for (float& v : values) v = std::clamp(v, 0.0f, 1.0f);
}

ImagePlane ImagePlane::luminance() const {
  if (channels == 1) return *this;
  if (channels != 3) throw std::invalid_argument("luminance: expected 1 or 3 channels");
  ImagePlane out(1, height, width);
  const std::size_t n = height * width;
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = static_cast<float>(0.299 * values[i] + 0.587 * values[n + i] +
                                       0.114 * values[2 * n + i]);
  }
  return out;
}

namespace {

std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

ImagePlane from_interleaved(const std::vector<unsigned char>& bytes, std::size_t c, std::size_t h,
                            std::size_t w) {
  ImagePlane img(c, h, w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        img.at(k, y, x) = float(bytes[(y * w + x) * c + k]) / 255.0f;
      }
    }
  }
  return img;
}

std::vector<unsigned char> to_interleaved(const ImagePlane& img) {
  std::vector<unsigned char> bytes(img.values.size());
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t k = 0; k < img.channels; ++k) {
        const float v = std::clamp(img.at(k, y, x), 0.0f, 1.0f);
        bytes[(y * img.width + x) * img.channels + k] =
            static_cast<unsigned char>(std::lround(double(v) * 255.0));
      }
    }
  }
  return bytes;
}

// --- PNM -----------------------------------------------------------------

std::size_t read_pnm_int(std::istream& in, const std::filesystem::path& path) {
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  if (ch == EOF || !std::isdigit(ch)) throw IoError(path.string() + ": malformed PNM header");
  std::size_t v = 0;
  while (ch != EOF && std::isdigit(ch)) {
    v = v * 10 + std::size_t(ch - '0');
    ch = in.get();
  }
  // exactly one whitespace byte separates the header from the raster
  if (ch == EOF || !std::isspace(ch)) throw IoError(path.string() + ": malformed PNM header");
  return v;
}

ImagePlane load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open file");
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw IoError(path.string() + ": not a binary PGM/PPM (P5/P6) file");
  }
  const std::size_t c = magic[1] == '5' ? 1 : 3;
  const std::size_t w = read_pnm_int(in, path);
  const std::size_t h = read_pnm_int(in, path);
  const std::size_t maxval = read_pnm_int(in, path);
  if (maxval != 255) {
    throw IoError(path.string() + ": unsupported bit depth (maxval " + std::to_string(maxval) +
                     ", only 255 is supported)");
  }
  if (w == 0 || h == 0) throw IoError(path.string() + ": empty image");
  std::vector<unsigned char> bytes(w * h * c);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (in.gcount() != std::streamsize(bytes.size())) throw IoError(path.string() + ": truncated raster");
  return from_interleaved(bytes, c, h, w);
}

void save_pnm(const ImagePlane& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
  const auto bytes = to_interleaved(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

// --- PNG -----------------------------------------------------------------

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

ImagePlane load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError(path.string() + ": cannot open file");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": libpng initialization failed");
  }
  std::vector<unsigned char> bytes;
  std::vector<png_bytep> rows;
  std::size_t w = 0, h = 0, c = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": PNG decode error: " + err);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int type = png_get_color_type(png, info);
  if (depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": unsupported bit depth 16 (8-bit images only)");
  }
  if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  c = png_get_channels(png, info);
  if (c != 1 && c != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": unsupported channel layout");
  }
  bytes.resize(w * h * c);
  rows.resize(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = bytes.data() + y * w * c;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return from_interleaved(bytes, c, h, w);
}

void save_png(const ImagePlane& img, const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError(path.string() + ": cannot open for writing");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": libpng initialization failed");
  }
  const auto bytes = to_interleaved(img);
  std::vector<png_const_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = bytes.data() + y * img.width * img.channels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": PNG encode error: " + err);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
  const auto e = lower_ext(path);
  return e == ".png" || e == ".pgm" || e == ".ppm" || e == ".pnm";
}

ImagePlane load_image(const std::filesystem::path& path) {
  const auto e = lower_ext(path);
  if (e == ".png") return load_png(path);
  if (e == ".pgm" || e == ".ppm" || e == ".pnm") return load_pnm(path);
  throw IoError(path.string() + ": unsupported image format (expected .png, .pgm or .ppm)");
}

void save_image(const ImagePlane& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3) throw IoError("save_image: 1 or 3 channels required");
  if (img.values.size() != img.channels * img.height * img.width || img.values.empty()) {
    throw IoError("save_image: image buffer does not match its dimensions");
  }
  const auto e = lower_ext(path);
  if (e == ".png") return save_png(img, path);
  if (e == ".pgm" || e == ".ppm" || e == ".pnm") {
    if ((e == ".pgm" && img.channels != 1) || (e == ".ppm" && img.channels != 3)) {
      throw IoError(path.string() + ": extension does not match channel count");
    }
    return save_pnm(img, path);
  }
  throw IoError(path.string() + ": unsupported image format (expected .png, .pgm or .ppm)");
}

}  // namespace ierd
