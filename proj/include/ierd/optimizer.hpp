#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ierd/errors.hpp"
#include "ierd/network.hpp"

namespace ierd {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double base_lr = 1e-4;
  std::uint64_t halving_period = 100000;
  double weight_decay = 1e-3;

  void validate() const;
  bool operator==(const AdamHyper&) const = default;
};

/// base_lr * 0.5^floor(step / halving_period).
double lr_at(std::uint64_t step, double base_lr, std::uint64_t halving_period);

/// Moment buffers mirror the ParamStore entry order; weights then biases.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<ConvParams<T>> m;
  std::vector<ConvParams<T>> v;

  AdamState() = default;
  AdamState(const ParamStore<T>& params, AdamHyper hyper);

  bool operator==(const AdamState&) const = default;
};

/// One decoupled-weight-decay Adam update using the gradient buffers of
/// `params`. The rate is lr_at(state.step) with the pre-increment step count.
/// Returns the rate used.
template <typename T>
double adam_step(ParamStore<T>& params, AdamState<T>& state);

}  // namespace ierd
