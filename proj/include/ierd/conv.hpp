#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ierd/tensor.hpp"

namespace ierd {

/// One stride-1 square convolution. padding == dilation keeps 3x3 outputs the
/// same size as their input.
struct ConvLayerSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t dilation = 1;
  std::size_t padding = 1;

  static ConvLayerSpec same(std::size_t in, std::size_t out, std::size_t dilation,
                            std::size_t kernel = 3) {
    return {in, out, kernel, dilation, dilation * (kernel / 2)};
  }

  /// Throws std::invalid_argument when the spec is outside what the kernels support.
  void validate() const;

  std::size_t weight_count() const { return out_channels * in_channels * kernel * kernel; }
  std::size_t param_count() const { return weight_count() + out_channels; }
  bool operator==(const ConvLayerSpec&) const = default;
};

template <typename T>
struct ConvParams {
  BasicTensor<T> weight;  // (out, in, k, k)
  std::vector<T> bias;    // out

  ConvParams() = default;
  explicit ConvParams(const ConvLayerSpec& spec)
      : weight(spec.out_channels, spec.in_channels, spec.kernel, spec.kernel),
        bias(spec.out_channels, T(0)) {}

  void zero() {
    weight.fill(T(0));
    std::fill(bias.begin(), bias.end(), T(0));
  }

  template <typename U>
  ConvParams<U> cast() const {
    ConvParams<U> out;
    out.weight = weight.template cast<U>();
    out.bias.assign(bias.begin(), bias.end());
    return out;
  }

  bool operator==(const ConvParams&) const = default;
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  std::vector<T> bias;
};

/// Zero-padded dilated convolution; output keeps the input's spatial size.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvParams<T>& params,
                              const ConvLayerSpec& spec);

/// Adjoint of conv2d_forward. Pass need_input_grad = false to skip the
/// input-gradient (e.g. for the first layer of a network).
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvParams<T>& params,
                             const ConvLayerSpec& spec, const BasicTensor<T>& grad_out,
                             bool need_input_grad = true);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out);

/// He-normal weights, zero bias. Deterministic for a fixed seed.
ConvParams<float> he_init(const ConvLayerSpec& spec, std::uint64_t rng_seed);

/// Center-tap identity: output channel o copies input channel o (o < min(in, out)).
template <typename T>
ConvParams<T> identity_params(const ConvLayerSpec& spec);

/// 1 + (kernel - 1) * sum(dilations).
std::size_t receptive_field(std::span<const std::size_t> dilations, std::size_t kernel = 3);

/// Worker threads used by the batch loops inside the convolution kernels.
/// Results do not depend on this value.
void set_num_threads(unsigned n);
unsigned num_threads();

}  // namespace ierd
