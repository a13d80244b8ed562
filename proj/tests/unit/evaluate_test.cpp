#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "ierd/evaluate.hpp"
#include "oracles.hpp"

using namespace ierd;
using ierd::testing::synthetic_image;

namespace {

ImagePlane random_plane(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed, float lo = 0,
                        float hi = 1) {
  ImagePlane img(c, h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  for (auto& v : img.values) v = u(rng);
  return img;
}

// Mean SSIM straight from the definition: explicit 2-D Gaussian window per
// position, moments as weighted sums of deviations.
double ssim_direct(const ImagePlane& a, const ImagePlane& b) {
  const int r = 5;
  const double s = 1.5;
  const long h = long(a.height), w = long(a.width);
  const bool valid = h >= 2 * r + 1 && w >= 2 * r + 1;
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  long count = 0;
  for (long y = valid ? r : 0; y < (valid ? h - r : h); ++y)
    for (long x = valid ? r : 0; x < (valid ? w - r : w); ++x) {
      double z = 0, ma = 0, mb = 0;
      for (long v = -r; v <= r; ++v)
        for (long u = -r; u <= r; ++u) {
          if (y + v < 0 || y + v >= h || x + u < 0 || x + u >= w) continue;
          const double g = std::exp(-double(u * u + v * v) / (2 * s * s));
          z += g;
          ma += g * a.at(0, y + v, x + u);
          mb += g * b.at(0, y + v, x + u);
        }
      ma /= z;
      mb /= z;
      double va = 0, vb = 0, cov = 0;
      for (long v = -r; v <= r; ++v)
        for (long u = -r; u <= r; ++u) {
          if (y + v < 0 || y + v >= h || x + u < 0 || x + u >= w) continue;
          const double g = std::exp(-double(u * u + v * v) / (2 * s * s)) / z;
          const double da = a.at(0, y + v, x + u) - ma, db = b.at(0, y + v, x + u) - mb;
          va += g * da * da;
          vb += g * db * db;
          cov += g * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / double(count);
}

// Kernels invariant under flips and quarter turns make the whole network
// equivariant to the dihedral group.
ParamStore<float> symmetric_network(const NetworkConfig& cfg, std::uint64_t seed) {
  auto p = init_params(cfg, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.3f, 0.3f);
  for (auto& e : p.entries()) {
    auto& wt = e.params.weight;
    for (std::size_t o = 0; o < wt.shape().n; ++o)
      for (std::size_t i = 0; i < wt.shape().c; ++i) {
        const float center = u(rng), edge = u(rng), corner = u(rng);
        for (std::size_t ky = 0; ky < 3; ++ky)
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const int d = std::abs(int(ky) - 1) + std::abs(int(kx) - 1);
            wt.at(o, i, ky, kx) = d == 0 ? center : d == 1 ? edge : corner;
          }
      }
    for (auto& b : e.params.bias) b = u(rng) * 0.1f;
  }
  return p;
}

double max_diff(const ImagePlane& a, const ImagePlane& b) {
  EXPECT_TRUE(a.same_shape(b));
  double m = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, double(std::abs(a.values[i] - b.values[i])));
  return m;
}

}  // namespace

TEST(Psnr, Examples) {
  const ImagePlane a = random_plane(1, 8, 8, 1);
  EXPECT_EQ(psnr(a, a), kPsnrIdentical);
  EXPECT_TRUE(std::isinf(psnr(a, a)));

  ImagePlane z(1, 5, 5), d(1, 5, 5);
  for (int i = 0; i < 4; ++i) d.values[std::size_t(i)] = 0.25f;
  EXPECT_DOUBLE_EQ(mse(z, d), 0.01);
  EXPECT_DOUBLE_EQ(psnr(z, d), 20.0);

  ImagePlane base(1, 10, 10), off(1, 10, 10);
  for (std::size_t i = 0; i < 100; ++i) {
    base.values[i] = float(i) / 255.0f;
    off.values[i] = float(i + 10) / 255.0f;
  }
  EXPECT_NEAR(psnr(base, off), 10 * std::log10(255.0 * 255.0 / 100.0), 1e-4);
  EXPECT_NEAR(psnr(base, off), 28.13, 0.005);
  EXPECT_THROW(psnr(ImagePlane(1, 2, 2), ImagePlane(1, 2, 3)), std::invalid_argument);
}

TEST(Psnr, SymmetricAndMonotone) {
  const ImagePlane a = random_plane(3, 9, 7, 2), b = random_plane(3, 9, 7, 3);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
  ImagePlane closer = a;
  for (std::size_t i = 0; i < a.values.size(); ++i) closer.values[i] = 0.5f * (a.values[i] + b.values[i]);
  EXPECT_GT(psnr(a, closer), psnr(a, b));
}

TEST(Ssim, IdenticalIsExactlyOne) {
  for (auto [h, w] : {std::pair{32u, 40u}, {5u, 7u}, {1u, 1u}}) {
    const ImagePlane a = random_plane(1, h, w, 4);
    EXPECT_EQ(ssim(a, a), 1.0);
  }
  const ImagePlane rgb = random_plane(3, 20, 20, 5);
  EXPECT_EQ(ssim(rgb, rgb), 1.0);
}

TEST(Ssim, NegativeOfHalfGrayIsSame) {
  const ImagePlane a(1, 16, 16, 0.5f);
  ImagePlane neg = a;
  for (auto& v : neg.values) v = 1.0f - v;
  EXPECT_EQ(ssim(a, neg), 1.0);
}

TEST(Ssim, MatchesDirectSummation) {
  for (auto [h, w] : {std::pair{24u, 30u}, {11u, 11u}, {6u, 9u}, {11u, 4u}}) {
    const ImagePlane a = synthetic_image(6, h, w);
    const ImagePlane b = add_awgn(a, 30, 7);
    EXPECT_NEAR(ssim(a, b), ssim_direct(a, b), 1e-6) << h << "x" << w;
    const ImagePlane c = random_plane(1, h, w, 8);
    EXPECT_NEAR(ssim(a, c), ssim_direct(a, c), 1e-6) << h << "x" << w;
  }
}

TEST(Ssim, RangeAndSymmetry) {
  const ImagePlane a = random_plane(1, 20, 20, 9);
  ImagePlane inv = a;
  for (auto& v : inv.values) v = 1.0f - v;
  const double s = ssim(a, inv);
  EXPECT_LT(s, 0.0);
  EXPECT_GE(s, -1.0);
  const ImagePlane b = random_plane(1, 20, 20, 10);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Ssim, RgbUsesLuminance) {
  const ImagePlane a = random_plane(3, 16, 16, 11), b = random_plane(3, 16, 16, 12);
  EXPECT_NEAR(ssim(a, b), ssim(a.luminance(), b.luminance()), 1e-12);
}

TEST(Denoise, ZeroNetworkGivesBlack) {
  const ParamStore<float> zero(NetworkConfig::make(1, 2, 4, 1));
  const ImagePlane out = denoise_image(random_plane(1, 17, 13, 13), zero);
  EXPECT_EQ(out, ImagePlane(1, 17, 13));
}

TEST(Denoise, BsdSizedShape) {
  const auto p = init_params(NetworkConfig::make(1, 2, 4, 1), 14);
  const ImagePlane out = denoise_image(random_plane(1, 321, 481, 15), p);
  EXPECT_EQ(out.height, 321u);
  EXPECT_EQ(out.width, 481u);
  for (float v : out.values) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Denoise, TiledMatchesWhole) {
  for (auto cfg : {NetworkConfig::make(1, 6, 8, 1), NetworkConfig::make(3, 6, 4, 1)}) {
    auto p = init_params(cfg, 16);
    const ImagePlane img = add_awgn(synthetic_image(17, 300, 300), 25, 18);
    const ImagePlane whole = denoise_raw(img, p);
    const ImagePlane tiled = denoise_tiled(img, p);
    EXPECT_LT(max_diff(whole, tiled), 1e-5) << "radius " << cfg.receptive_radius();
    DenoiseOptions small;
    small.max_pixels = 1000;
    EXPECT_LT(max_diff(whole, denoise_raw(img, p, small)), 1e-5);
  }
}

TEST(Denoise, RejectsChannelMismatch) {
  const auto p = init_params(NetworkConfig::make(1, 2, 4, 3), 19);
  EXPECT_THROW(denoise_image(ImagePlane(1, 4, 4), p), std::invalid_argument);
  EXPECT_THROW(self_ensemble(ImagePlane(1, 4, 4), p), std::invalid_argument);
}

TEST(Ensemble, IdentityNetworkReturnsInput) {
  for (std::size_t c : {1u, 3u}) {
    const auto p = identity_network<float>(NetworkConfig::make(2, 3, 6, c));
    const ImagePlane img = random_plane(c, 19, 23, 20);
    EXPECT_EQ(self_ensemble(img, p), img);
  }
}

TEST(Ensemble, EquivariantNetworkMatchesSinglePass) {
  const auto p = symmetric_network(NetworkConfig::make(2, 3, 4, 1), 21);
  const ImagePlane img = random_plane(1, 15, 18, 22);
  EXPECT_LT(max_diff(self_ensemble(img, p), denoise_image(img, p)), 1e-6);
}

TEST(Ensemble, CommutesWithGroupElements) {
  const auto p = init_params(NetworkConfig::make(1, 3, 6, 1), 23);
  const ImagePlane img = random_plane(1, 14, 17, 24);
  const ImagePlane base = self_ensemble(img, p);
  for (int k = 0; k < 8; ++k) {
    EXPECT_LT(max_diff(self_ensemble(apply_transform(img, {k}), p), apply_transform(base, {k})), 1e-6) << k;
  }
}

TEST(Evaluate, ReportIsDeterministicAndConsistent) {
  Dataset d;
  for (int i = 0; i < 3; ++i) {
    d.images.push_back(synthetic_image(30 + i, 40, 36));
    d.names.push_back("t" + std::to_string(i) + ".png");
  }
  const auto p = init_params(NetworkConfig::make(1, 2, 4, 1), 25);
  const EvalReport a = evaluate(d, p, 25, 7, false), b = evaluate(d, p, 25, 7, false);
  std::ostringstream ca, cb;
  a.write_csv(ca);
  b.write_csv(cb);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(ca.str().substr(0, ca.str().find('\n')), "image,psnr_noisy,psnr_denoised,ssim_noisy,ssim_denoised");

  std::istringstream rows(ca.str());
  std::string line;
  std::getline(rows, line);
  double sum = 0;
  int n = 0;
  while (std::getline(rows, line)) {
    std::istringstream f(line);
    std::string name, v;
    std::getline(f, name, ',');
    std::getline(f, v, ',');
    sum += std::stod(v);
    ++n;
  }
  ASSERT_EQ(n, 3);
  EXPECT_NEAR(a.mean().psnr_noisy, sum / 3, 1e-8);

  std::ostringstream table;
  a.write_table(table);
  std::istringstream tl(table.str());
  std::string last;
  while (std::getline(tl, line)) last = line;
  std::istringstream lf(last);
  std::string label;
  double mean_noisy;
  lf >> label >> mean_noisy;
  EXPECT_EQ(label, "mean");
  EXPECT_NEAR(mean_noisy, sum / 3, 1e-4);

  // noisy PSNR comes from the same noise the denoiser saw
  EXPECT_EQ(a.rows[1].psnr_noisy, psnr(eval_noisy_image(d.images[1], 25, 7, 1), d.images[1]));
}

TEST(Evaluate, IdentityCheckpointKeepsNoisyPsnr) {
  Dataset d;
  d.images.push_back(synthetic_image(40, 48, 48));
  d.names.push_back("x");
  const auto p = identity_network<float>(NetworkConfig::make(1, 2, 4, 1));
  const EvalReport r = evaluate(d, p, 25, 3, false);
  // only clamping separates the two
  EXPECT_NEAR(r.rows[0].psnr_denoised, r.rows[0].psnr_noisy, 0.6);
  EXPECT_GE(r.rows[0].psnr_denoised, r.rows[0].psnr_noisy);
}

TEST(Noise, JointPsnrAtSigma25) {
  const ImagePlane clean = synthetic_image(41, 1000, 1000);
  const ImagePlane noisy = add_awgn(clean, 25, 42);
  EXPECT_NEAR(psnr(noisy, clean), 20.17, 0.05);
}
