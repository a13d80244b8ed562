#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "ierd/data.hpp"
#include "ierd/image.hpp"
#include "ierd/network.hpp"

namespace ierd {

struct DenoiseOptions {
  /// Images with more pixels than this are processed in tiles.
  std::size_t max_pixels = std::size_t(1) << 22;
  std::size_t tile = 256;
  /// Context kept around each tile; raised to the network's receptive radius
  /// when that is larger.
  std::size_t overlap = 48;
};

/// Network output for a whole image without clamping.
ImagePlane denoise_raw(const ImagePlane& img, const ParamStore<float>& params,
                       const DenoiseOptions& opts = {});
/// Always tiles, regardless of size. Exposed for equivalence checks.
ImagePlane denoise_tiled(const ImagePlane& img, const ParamStore<float>& params,
                         const DenoiseOptions& opts = {});

/// Single pass, clamped to [0, 1].
ImagePlane denoise_image(const ImagePlane& img, const ParamStore<float>& params,
                         const DenoiseOptions& opts = {});

/// Mean over the 8 dihedral transforms of inverse(net(transform(img))),
/// clamped to [0, 1].
ImagePlane self_ensemble(const ImagePlane& img, const ParamStore<float>& params,
                         const DenoiseOptions& opts = {});

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double mse(const ImagePlane& a, const ImagePlane& b);
/// 10 log10(peak^2 / mse); +infinity when the images are identical.
double psnr(const ImagePlane& a, const ImagePlane& b, double peak = 1.0);
/// Mean SSIM over an 11x11 Gaussian window (sigma 1.5, K1 0.01, K2 0.03, peak
/// 1) on luminance. Uses every position where the window fits; images smaller
/// than the window use a truncated, renormalized window at every pixel.
double ssim(const ImagePlane& a, const ImagePlane& b);

struct EvalRow {
  std::string image;
  double psnr_noisy = 0;
  double psnr_denoised = 0;
  double ssim_noisy = 0;
  double ssim_denoised = 0;
  double seconds = 0;
};

struct EvalReport {
  std::string checkpoint;
  double sigma = 0;
  std::uint64_t seed = 0;
  bool ensemble = false;
  std::vector<EvalRow> rows;

  EvalRow mean() const;
  /// image,psnr_noisy,psnr_denoised,ssim_noisy,ssim_denoised
  void write_csv(std::ostream& out) const;
  void write_table(std::ostream& out) const;
};

/// Noise for image i is drawn from derive_seed(seed, {i}), so reports are
/// reproducible.
EvalReport evaluate(const Dataset& clean, const ParamStore<float>& params, double sigma,
                    std::uint64_t seed, bool ensemble, const DenoiseOptions& opts = {});

ImagePlane eval_noisy_image(const ImagePlane& clean, double sigma, std::uint64_t seed,
                            std::size_t index);

}  // namespace ierd
