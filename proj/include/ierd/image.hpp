#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "ierd/errors.hpp"
#include "ierd/tensor.hpp"

namespace ierd {

/// Decoded image, planar (c, h, w), values nominally in [0, 1].
struct ImagePlane {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  ImagePlane() = default;
  ImagePlane(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), values(c * h * w, fill) {}

  float& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return values[(c * height + y) * width + x];
  }
  bool same_shape(const ImagePlane& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  bool operator==(const ImagePlane&) const = default;

  /// (1, c, h, w) tensor view copy.
  Tensor to_tensor() const;
  /// Item n of a (n, c, h, w) tensor.
  static ImagePlane from_tensor(const Tensor& t, std::size_t n = 0);

  void clamp01();
  /// BT.601 luma for RGB; a copy for grayscale.
  ImagePlane luminance() const;
};

/// Reads 8-bit PNG (gray, gray+alpha, RGB, RGBA, palette) or binary PGM/PPM
/// (maxval 255). Values are normalized by 1/255; alpha is dropped.
ImagePlane load_image(const std::filesystem::path& path);

/// Clamps to [0, 1], quantizes with round(v * 255) and writes an 8-bit PNG,
/// PGM or PPM depending on the extension.
void save_image(const ImagePlane& img, const std::filesystem::path& path);

bool is_image_file(const std::filesystem::path& path);

}  // namespace ierd
