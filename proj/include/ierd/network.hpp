#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ierd/conv.hpp"

namespace ierd {

/// Meta-structure of the denoiser: `modules` identity-mapping modules, each a
/// chain of `layers` ReLU+conv pairs at `channels` features, followed by one
/// final conv back to the image channel count.
struct NetworkConfig {
  std::size_t modules = 3;
  std::size_t layers = 6;
  std::size_t channels = 64;
  std::size_t image_channels = 1;
  std::size_t kernel = 3;
  /// Dilation per layer position inside a module; padding follows dilation.
  std::vector<std::size_t> dilations = {1, 3, 3, 3, 3, 3};

  /// Dilation 1 on the first pair, `rest` on every following pair.
  static std::vector<std::size_t> default_dilations(std::size_t layers, std::size_t rest = 3);
  static NetworkConfig make(std::size_t modules, std::size_t layers, std::size_t channels,
                            std::size_t image_channels = 1);

  void validate() const;
  ConvLayerSpec layer_spec(std::size_t module, std::size_t layer) const;
  ConvLayerSpec final_spec() const;
  /// True when module 0 cannot skip its raw input because the channel count changes.
  bool lifts_input() const { return image_channels != channels; }
  /// Pixels of context on each side that influence one output pixel.
  std::size_t receptive_radius() const;

  bool operator==(const NetworkConfig&) const = default;
};

struct LayerId {
  static constexpr std::size_t kFinal = static_cast<std::size_t>(-1);
  std::size_t module = 0;
  std::size_t layer = 0;

  bool is_final() const { return module == kFinal; }
  std::string name() const;
  bool operator==(const LayerId&) const = default;
};

/// Every conv's parameters plus gradient buffers of identical shape, in a
/// fixed order: module-major, layer-minor, then the final conv.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    LayerId id;
    ConvLayerSpec spec;
    ConvParams<T> params;
    ConvParams<T> grads;
  };

  ParamStore() = default;
  /// All-zero parameters.
  explicit ParamStore(const NetworkConfig& config);

  const NetworkConfig& config() const { return config_; }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  Entry& layer(std::size_t module, std::size_t layer) { return entries_[module * config_.layers + layer]; }
  const Entry& layer(std::size_t module, std::size_t layer) const {
    return entries_[module * config_.layers + layer];
  }
  Entry& final_layer() { return entries_.back(); }
  const Entry& final_layer() const { return entries_.back(); }

  void zero_grads();
  std::size_t scalar_count() const;

  /// Bumped whenever parameter values change through the optimizer, so stale
  /// forward traces can be detected.
  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

  template <typename U>
  ParamStore<U> cast() const;

 private:
  template <typename>
  friend class ParamStore;

  NetworkConfig config_;
  std::vector<Entry> entries_;
  std::uint64_t version_ = 0;
};

/// Deterministic He initialization; each layer draws from its own derived seed.
ParamStore<float> init_params(const NetworkConfig& config, std::uint64_t seed);

/// Parameters that make the whole network an identity map on non-negative input.
template <typename T>
ParamStore<T> identity_network(const NetworkConfig& config);

/// Activations of one module needed by its backward pass.
template <typename T>
struct ModuleTrace {
  std::vector<BasicTensor<T>> pre;   // ReLU inputs; pre[0] is the module input y_m
  std::vector<BasicTensor<T>> post;  // ReLU outputs, i.e. the conv inputs

  /// Output of the first ReLU+conv pair, z_{m,0}.
  const BasicTensor<T>& first() const { return pre.at(1); }
};

template <typename T>
struct ForwardTrace {
  std::uint64_t params_version = 0;
  const void* params_owner = nullptr;
  Shape input_shape;
  std::vector<ModuleTrace<T>> modules;
  BasicTensor<T> final_input;
};

/// One identity-mapping module (0-based index). Returns skip + (chain - z_{m,0})
/// where skip is the module input y_m, or z_{m,0} itself for a first module
/// that lifts image channels to feature channels.
template <typename T>
BasicTensor<T> module_forward(const BasicTensor<T>& y, const ParamStore<T>& params,
                              std::size_t module, ModuleTrace<T>* trace = nullptr);

template <typename T>
BasicTensor<T> ierd_forward(const BasicTensor<T>& y, const ParamStore<T>& params,
                            ForwardTrace<T>* trace = nullptr);

/// Overwrites the gradient buffers of `params` with d<grad_out, x_hat>/dw.
/// When need_input_grad is set, also returns d<grad_out, x_hat>/dy; otherwise
/// the returned tensor is a 1x1x1x1 placeholder.
template <typename T>
BasicTensor<T> ierd_backward(const ForwardTrace<T>& trace, const BasicTensor<T>& grad_out,
                             ParamStore<T>& params, bool need_input_grad = false);

std::size_t num_params(const NetworkConfig& config);

}  // namespace ierd
