#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ierd/image.hpp"
#include "ierd/tensor.hpp"

namespace ierd {

// --- dihedral transforms --------------------------------------------------

/// Element of the dihedral group of the square: an optional horizontal flip
/// followed by `id % 4` counter-clockwise quarter turns. id 0 is the identity.
struct GeometricTransform {
  int id = 0;

  static constexpr int kCount = 8;
  bool flips() const { return id >= 4; }
  int quarter_turns() const { return id % 4; }
  GeometricTransform inverse() const;
  /// The transform equivalent to applying `first`, then `*this`.
  GeometricTransform after(GeometricTransform first) const;
  bool operator==(const GeometricTransform&) const = default;
};

ImagePlane apply_transform(const ImagePlane& img, GeometricTransform t);
ImagePlane invert_transform(const ImagePlane& img, GeometricTransform t);

// --- noise ----------------------------------------------------------------

/// Sigma is on the 0-255 scale.
struct NoiseModel {
  enum class Mode { kSpecific, kAgnostic };
  Mode mode = Mode::kSpecific;
  double sigma = 25.0;
  double sigma_min = 0.0;
  double sigma_max = 55.0;

  static NoiseModel specific(double sigma) { return {Mode::kSpecific, sigma, sigma, sigma}; }
  static NoiseModel agnostic(double lo, double hi) { return {Mode::kAgnostic, 0.0, lo, hi}; }
  void validate() const;
  bool operator==(const NoiseModel&) const = default;
};

/// clean + N(0, (sigma/255)^2) per element, no clamping. sigma == 0 returns
/// an exact copy.
Tensor add_awgn(const Tensor& clean, double sigma, std::uint64_t seed);
ImagePlane add_awgn(const ImagePlane& clean, double sigma, std::uint64_t seed);

// --- datasets and patches -------------------------------------------------

struct Dataset {
  std::vector<ImagePlane> images;
  std::vector<std::string> names;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
};

/// Loads every image in a directory (sorted by filename) or every path listed
/// in a manifest file (one per line, relative to the manifest's directory).
Dataset load_dataset(const std::filesystem::path& dir_or_manifest);

/// Provenance of one training patch; enough to rebuild it bit-exactly.
struct PatchOrigin {
  std::size_t image = 0;
  std::size_t top = 0;
  std::size_t left = 0;
  GeometricTransform transform;
  double sigma = 0.0;
  std::uint64_t noise_seed = 0;
};

struct PatchBatch {
  Tensor clean;
  Tensor noisy;
  std::vector<PatchOrigin> items;
};

/// Crops, transforms and noises a single patch from its provenance record.
void build_patch(const Dataset& data, std::size_t patch_size, const PatchOrigin& origin,
                 ImagePlane& clean, ImagePlane& noisy);

/// Draws random patches. Batch `index` is fully determined by (seed, index),
/// so any batch can be regenerated without replaying earlier ones.
class PatchSampler {
 public:
  PatchSampler(const Dataset& data, std::size_t patch_size, std::size_t batch_size,
               NoiseModel noise, std::uint64_t seed);

  PatchBatch sample(std::uint64_t index) const;
  /// Images large enough to supply a patch.
  const std::vector<std::size_t>& eligible() const { return eligible_; }

 private:
  const Dataset* data_;
  std::size_t patch_;
  std::size_t batch_;
  NoiseModel noise_;
  std::uint64_t seed_;
  std::vector<std::size_t> eligible_;
};

}  // namespace ierd
