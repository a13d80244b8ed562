#include "ierd/data.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>

#include "ierd/rng.hpp"

namespace ierd {

GeometricTransform GeometricTransform::inverse() const {
  if (flips()) return *this;  // reflections are involutions
  return {(4 - quarter_turns()) % 4};
}

GeometricTransform GeometricTransform::after(GeometricTransform first) const {
  // R^a F^f R^b F^g = R^(a +- b) F^(f xor g), since F R F = R^-1.
  const int b = flips() ? (4 - first.quarter_turns()) % 4 : first.quarter_turns();
  const int k = (quarter_turns() + b) % 4;
  const bool f = flips() != first.flips();
  return {k + (f ? 4 : 0)};
}

namespace {

ImagePlane hflip(const ImagePlane& img) {
  ImagePlane out(img.channels, img.height, img.width);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

// Counter-clockwise quarter turn: the top-right corner moves to the top-left.
ImagePlane rot90(const ImagePlane& img) {
  ImagePlane out(img.channels, img.width, img.height);
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t y = 0; y < out.height; ++y)
      for (std::size_t x = 0; x < out.width; ++x) out.at(c, y, x) = img.at(c, x, img.width - 1 - y);
  return out;
}

}  // namespace

ImagePlane apply_transform(const ImagePlane& img, GeometricTransform t) {
  if (t.id < 0 || t.id >= GeometricTransform::kCount) {
    throw std::invalid_argument("transform id must be in 0..7");
  }
  ImagePlane out = t.flips() ? hflip(img) : img;
  for (int k = 0; k < t.quarter_turns(); ++k) out = rot90(out);
  return out;
}

ImagePlane invert_transform(const ImagePlane& img, GeometricTransform t) {
  if (t.id < 0 || t.id >= GeometricTransform::kCount) {
    throw std::invalid_argument("transform id must be in 0..7");
  }
  return apply_transform(img, t.inverse());
}

void NoiseModel::validate() const {
  if (mode == Mode::kSpecific && !(sigma >= 0)) throw std::invalid_argument("noise: sigma must be >= 0");
  if (mode == Mode::kAgnostic && !(sigma_min >= 0 && sigma_min <= sigma_max)) {
    throw std::invalid_argument("noise: need 0 <= sigma_min <= sigma_max");
  }
}

namespace {

void add_noise_inplace(std::span<float> values, double sigma, std::uint64_t seed) {
  if (sigma == 0.0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma / 255.0);
  for (float& v : values) v = static_cast<float>(double(v) + normal(rng));
}

}  // namespace

Tensor add_awgn(const Tensor& clean, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0)) throw std::invalid_argument("add_awgn: sigma must be >= 0");
  Tensor noisy = clean;
  add_noise_inplace(noisy.values(), sigma, seed);
  return noisy;
}

ImagePlane add_awgn(const ImagePlane& clean, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0)) throw std::invalid_argument("add_awgn: sigma must be >= 0");
  ImagePlane noisy = clean;
  add_noise_inplace(noisy.values, sigma, seed);
  return noisy;
}

Dataset load_dataset(const std::filesystem::path& source) {
  namespace fs = std::filesystem;
  std::vector<fs::path> paths;
  if (fs::is_directory(source)) {
    for (const auto& entry : fs::directory_iterator(source)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
  } else if (fs::is_regular_file(source)) {
    std::ifstream in(source);
    std::string line;
    while (std::getline(in, line)) {
      const auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos || line[b] == '#') continue;
      const auto e = line.find_last_not_of(" \t\r");
      fs::path p = line.substr(b, e - b + 1);
      paths.push_back(p.is_absolute() ? p : source.parent_path() / p);
    }
  } else {
    throw IoError(source.string() + ": dataset path does not exist");
  }
  if (paths.empty()) throw IoError(source.string() + ": dataset contains no images");

  Dataset data;
  for (const auto& p : paths) {
    data.images.push_back(load_image(p));
    data.names.push_back(p.filename().string());
  }
  return data;
}

void build_patch(const Dataset& data, std::size_t patch_size, const PatchOrigin& o,
                 ImagePlane& clean, ImagePlane& noisy) {
  const ImagePlane& src = data.images.at(o.image);
  if (o.top + patch_size > src.height || o.left + patch_size > src.width) {
    throw std::out_of_range("build_patch: crop exceeds image bounds");
  }
  ImagePlane crop(src.channels, patch_size, patch_size);
  for (std::size_t c = 0; c < src.channels; ++c)
    for (std::size_t y = 0; y < patch_size; ++y)
      for (std::size_t x = 0; x < patch_size; ++x) crop.at(c, y, x) = src.at(c, o.top + y, o.left + x);
  clean = apply_transform(crop, o.transform);
  noisy = add_awgn(clean, o.sigma, o.noise_seed);
}

PatchSampler::PatchSampler(const Dataset& data, std::size_t patch_size, std::size_t batch_size,
                           NoiseModel noise, std::uint64_t seed)
    : data_(&data), patch_(patch_size), batch_(batch_size), noise_(noise), seed_(seed) {
  if (patch_size == 0 || batch_size == 0) {
    throw std::invalid_argument("patch sampler: patch size and batch size must be >= 1");
  }
  noise.validate();
  if (data.empty()) throw std::invalid_argument("patch sampler: dataset is empty");
  const std::size_t channels = data.images.front().channels;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& img = data.images[i];
    if (img.channels != channels) {
      throw std::invalid_argument("patch sampler: mixed channel counts in dataset");
    }
    if (img.height >= patch_size && img.width >= patch_size) {
      eligible_.push_back(i);
    } else {
      std::cerr << "warning: skipping " << data.names[i] << " (" << img.width << "x" << img.height
                << ") smaller than patch size " << patch_size << "\n";
    }
  }
  if (eligible_.empty()) {
    throw std::invalid_argument("patch sampler: no image is at least " + std::to_string(patch_size) +
                                " pixels in both dimensions");
  }
}

PatchBatch PatchSampler::sample(std::uint64_t index) const {
  const std::size_t channels = data_->images.front().channels;
  PatchBatch batch;
  batch.clean = Tensor(batch_, channels, patch_, patch_);
  batch.noisy = Tensor(batch_, channels, patch_, patch_);
  batch.items.reserve(batch_);

  std::mt19937_64 rng(derive_seed(seed_, {0xba7c4, index}));
  std::uniform_int_distribution<std::size_t> pick(0, eligible_.size() - 1);
  std::uniform_int_distribution<int> transform(0, GeometricTransform::kCount - 1);
  std::uniform_real_distribution<double> sigma(noise_.sigma_min, noise_.sigma_max);

  ImagePlane clean, noisy;
  const std::size_t item_size = channels * patch_ * patch_;
  for (std::size_t b = 0; b < batch_; ++b) {
    PatchOrigin o;
    o.image = eligible_[pick(rng)];
    const auto& img = data_->images[o.image];
    o.top = std::uniform_int_distribution<std::size_t>(0, img.height - patch_)(rng);
    o.left = std::uniform_int_distribution<std::size_t>(0, img.width - patch_)(rng);
    o.transform = {transform(rng)};
    if (noise_.mode == NoiseModel::Mode::kSpecific) {
      o.sigma = noise_.sigma;
    } else {
      o.sigma = noise_.sigma_min == noise_.sigma_max ? noise_.sigma_min : sigma(rng);
    }
    o.noise_seed = derive_seed(seed_, {0x7015e, o.image, o.top, o.left, index, b});
    build_patch(*data_, patch_, o, clean, noisy);
    std::copy(clean.values.begin(), clean.values.end(), batch.clean.data() + b * item_size);
    std::copy(noisy.values.begin(), noisy.values.end(), batch.noisy.data() + b * item_size);
    batch.items.push_back(o);
  }
  return batch;
}

}  // namespace ierd
