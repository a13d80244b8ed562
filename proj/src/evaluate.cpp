#include "ierd/evaluate.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "ierd/rng.hpp"

namespace ierd {

namespace {

void require_channels(const ImagePlane& img, const ParamStore<float>& params) {
  if (img.channels != params.config().image_channels) {
    throw std::invalid_argument("denoise: image has " + std::to_string(img.channels) +
                                " channels, checkpoint expects " +
                                std::to_string(params.config().image_channels));
  }
  if (img.height == 0 || img.width == 0) throw std::invalid_argument("denoise: empty image");
}

ImagePlane forward_whole(const ImagePlane& img, const ParamStore<float>& params) {
  return ImagePlane::from_tensor(ierd_forward(img.to_tensor(), params));
}

ImagePlane crop(const ImagePlane& img, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  ImagePlane out(img.channels, h, w);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

}  // namespace

ImagePlane denoise_tiled(const ImagePlane& img, const ParamStore<float>& params,
                         const DenoiseOptions& opts) {
  require_channels(img, params);
  const std::size_t margin = std::max(opts.overlap, params.config().receptive_radius());
  const std::size_t core = opts.tile > 2 * margin + 16 ? opts.tile - 2 * margin : 16;
  ImagePlane out(img.channels, img.height, img.width);
  for (std::size_t cy = 0; cy < img.height; cy += core) {
    for (std::size_t cx = 0; cx < img.width; cx += core) {
      const std::size_t y0 = cy > margin ? cy - margin : 0;
      const std::size_t x0 = cx > margin ? cx - margin : 0;
      const std::size_t y1 = std::min(img.height, cy + core + margin);
      const std::size_t x1 = std::min(img.width, cx + core + margin);
      const ImagePlane tile = forward_whole(crop(img, y0, x0, y1 - y0, x1 - x0), params);
      const std::size_t ch = std::min(core, img.height - cy);
      const std::size_t cw = std::min(core, img.width - cx);
      for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < ch; ++y)
          for (std::size_t x = 0; x < cw; ++x)
            out.at(c, cy + y, cx + x) = tile.at(c, cy + y - y0, cx + x - x0);
    }
  }
  return out;
}

ImagePlane denoise_raw(const ImagePlane& img, const ParamStore<float>& params,
                       const DenoiseOptions& opts) {
  require_channels(img, params);
  if (img.height * img.width > opts.max_pixels) return denoise_tiled(img, params, opts);
  return forward_whole(img, params);
}

ImagePlane denoise_image(const ImagePlane& img, const ParamStore<float>& params,
                         const DenoiseOptions& opts) {
  ImagePlane out = denoise_raw(img, params, opts);
  out.clamp01();
  return out;
}

ImagePlane self_ensemble(const ImagePlane& img, const ParamStore<float>& params,
                         const DenoiseOptions& opts) {
  require_channels(img, params);
  // 8 float terms summed in double are exact, so the mean of identical
  // outputs is returned unchanged.
  std::vector<double> acc(img.values.size(), 0.0);
  for (int id = 0; id < GeometricTransform::kCount; ++id) {
    const GeometricTransform t{id};
    const ImagePlane out = invert_transform(denoise_raw(apply_transform(img, t), params, opts), t);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += out.values[i];
  }
  ImagePlane result(img.channels, img.height, img.width);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    result.values[i] = static_cast<float>(acc[i] / GeometricTransform::kCount);
  }
  result.clamp01();
  return result;
}

double mse(const ImagePlane& a, const ImagePlane& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mse: image shapes differ");
  if (a.values.empty()) throw std::invalid_argument("mse: empty image");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = double(a.values[i]) - double(b.values[i]);
    sum += d * d;
  }
  return sum / double(a.values.size());
}

double psnr(const ImagePlane& a, const ImagePlane& b, double peak) {
  const double e = mse(a, b);
  if (e == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(peak * peak / e);
}

namespace {

constexpr int kSsimRadius = 5;
constexpr double kSsimSigma = 1.5;

/// 1-D pass of the normalized Gaussian. `valid` keeps only the positions
/// where the full window fits; otherwise every position is kept and the
/// window is truncated and renormalized at the borders.
std::vector<double> gauss_pass(const std::vector<double>& src, std::size_t rows, std::size_t cols,
                               bool valid, std::size_t& out_cols) {
  static const std::vector<double> kernel = [] {
    std::vector<double> k(2 * kSsimRadius + 1);
    double sum = 0.0;
    for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
      k[std::size_t(i + kSsimRadius)] = std::exp(-(i * i) / (2.0 * kSsimSigma * kSsimSigma));
      sum += k[std::size_t(i + kSsimRadius)];
    }
    for (auto& v : k) v /= sum;
    return k;
  }();
  const auto n = static_cast<std::ptrdiff_t>(cols);
  out_cols = valid ? cols - 2 * kSsimRadius : cols;
  std::vector<double> dst(rows * out_cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = src.data() + r * cols;
    for (std::size_t o = 0; o < out_cols; ++o) {
      const std::ptrdiff_t center = std::ptrdiff_t(valid ? o + kSsimRadius : o);
      double acc = 0.0, wsum = 0.0;
      for (int k = -kSsimRadius; k <= kSsimRadius; ++k) {
        const std::ptrdiff_t i = center + k;
        if (i < 0 || i >= n) continue;
        const double w = kernel[std::size_t(k + kSsimRadius)];
        acc += w * in[i];
        wsum += w;
      }
      dst[r * out_cols + o] = valid ? acc : acc / wsum;
    }
  }
  return dst;
}

std::vector<double> transpose(const std::vector<double>& m, std::size_t rows, std::size_t cols) {
  std::vector<double> t(m.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = m[r * cols + c];
  return t;
}

/// Separable Gaussian filter; result is row-major (out_h, out_w).
std::vector<double> gauss_filter(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 bool valid) {
  std::size_t ow = 0, oh = 0;
  auto rows = gauss_pass(img, h, w, valid, ow);
  auto cols = gauss_pass(transpose(rows, h, ow), ow, h, valid, oh);
  return transpose(cols, ow, oh);
}

}  // namespace

double ssim(const ImagePlane& a_in, const ImagePlane& b_in) {
  if (!a_in.same_shape(b_in)) throw std::invalid_argument("ssim: image shapes differ");
  if (a_in.values.empty()) throw std::invalid_argument("ssim: empty image");
  const ImagePlane a = a_in.luminance();
  const ImagePlane b = b_in.luminance();
  const std::size_t h = a.height, w = a.width, n = h * w;
  const bool valid = h >= 2 * kSsimRadius + 1 && w >= 2 * kSsimRadius + 1;

  std::vector<double> va(n), vb(n), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    va[i] = a.values[i];
    vb[i] = b.values[i];
    aa[i] = va[i] * va[i];
    bb[i] = vb[i] * vb[i];
    ab[i] = va[i] * vb[i];
  }
  const auto mu_a = gauss_filter(va, h, w, valid);
  const auto mu_b = gauss_filter(vb, h, w, valid);
  const auto e_aa = gauss_filter(aa, h, w, valid);
  const auto e_bb = gauss_filter(bb, h, w, valid);
  const auto e_ab = gauss_filter(ab, h, w, valid);

  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double var_a = e_aa[i] - ma * ma;
    const double var_b = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return total / double(mu_a.size());
}

EvalRow EvalReport::mean() const {
  EvalRow m;
  m.image = "mean";
  if (rows.empty()) return m;
  for (const auto& r : rows) {
    m.psnr_noisy += r.psnr_noisy;
    m.psnr_denoised += r.psnr_denoised;
    m.ssim_noisy += r.ssim_noisy;
    m.ssim_denoised += r.ssim_denoised;
    m.seconds += r.seconds;
  }
  const double n = double(rows.size());
  m.psnr_noisy /= n;
  m.psnr_denoised /= n;
  m.ssim_noisy /= n;
  m.ssim_denoised /= n;
  m.seconds /= n;
  return m;
}

void EvalReport::write_csv(std::ostream& out) const {
  out << "image,psnr_noisy,psnr_denoised,ssim_noisy,ssim_denoised\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.image << ',' << r.psnr_noisy << ',' << r.psnr_denoised << ',' << r.ssim_noisy << ','
        << r.ssim_denoised << '\n';
  }
}

void EvalReport::write_table(std::ostream& out) const {
  out << "checkpoint: " << checkpoint << "  sigma: " << sigma << "  seed: " << seed
      << "  ensemble: " << (ensemble ? "yes" : "no") << '\n';
  out << std::left << std::setw(28) << "image" << std::right << std::setw(12) << "PSNR noisy"
      << std::setw(12) << "PSNR out" << std::setw(12) << "SSIM noisy" << std::setw(12) << "SSIM out"
      << std::setw(10) << "sec" << '\n';
  auto row = [&](const EvalRow& r) {
    out << std::left << std::setw(28) << r.image << std::right << std::fixed << std::setprecision(4)
        << std::setw(12) << r.psnr_noisy << std::setw(12) << r.psnr_denoised << std::setw(12)
        << r.ssim_noisy << std::setw(12) << r.ssim_denoised << std::setprecision(3) << std::setw(10)
        << r.seconds << '\n';
    out.unsetf(std::ios::fixed);
  };
  for (const auto& r : rows) row(r);
  row(mean());
}

ImagePlane eval_noisy_image(const ImagePlane& clean, double sigma, std::uint64_t seed,
                            std::size_t index) {
  return add_awgn(clean, sigma, derive_seed(seed, {0xe7a1, index}));
}

EvalReport evaluate(const Dataset& clean, const ParamStore<float>& params, double sigma,
                    std::uint64_t seed, bool ensemble, const DenoiseOptions& opts) {
  EvalReport report;
  report.sigma = sigma;
  report.seed = seed;
  report.ensemble = ensemble;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const ImagePlane& x = clean.images[i];
    const ImagePlane y = eval_noisy_image(x, sigma, seed, i);
    const auto t0 = std::chrono::steady_clock::now();
    const ImagePlane x_hat = ensemble ? self_ensemble(y, params, opts) : denoise_image(y, params, opts);
    const auto t1 = std::chrono::steady_clock::now();
    EvalRow r;
    r.image = clean.names.empty() ? std::to_string(i) : clean.names[i];
    r.psnr_noisy = psnr(y, x);
    r.psnr_denoised = psnr(x_hat, x);
    r.ssim_noisy = ssim(y, x);
    r.ssim_denoised = ssim(x_hat, x);
    r.seconds = std::chrono::duration<double>(t1 - t0).count();
    report.rows.push_back(r);
  }
  return report;
}

}  // namespace ierd
