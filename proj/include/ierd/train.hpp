#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>

#include "ierd/checkpoint.hpp"
#include "ierd/data.hpp"
#include "ierd/network.hpp"
#include "ierd/optimizer.hpp"

namespace ierd {

struct TrainConfig {
  std::uint64_t total_steps = 1000;
  std::size_t batch = 32;
  std::size_t patch = 64;
  AdamHyper adam;
  NoiseModel noise = NoiseModel::specific(25.0);
  std::uint64_t checkpoint_every = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

template <typename T>
struct LossResult {
  double value = 0.0;
  BasicTensor<T> grad;
};

/// (1/N) * sum_i ||x_hat_i - x_i||^2 over the N batch items, with its gradient
/// (2/N) * (x_hat - x).
template <typename T>
LossResult<T> mse_loss(const BasicTensor<T>& x_hat, const BasicTensor<T>& x);

struct StepResult {
  double loss = 0.0;
  double lr = 0.0;
};

/// Forward, backward and one Adam update on a (noisy, clean) pair. Gradient
/// buffers are zeroed on return. Throws NumericalError (parameters untouched)
/// when the loss or a gradient is not finite.
template <typename T>
StepResult train_step(ParamStore<T>& params, AdamState<T>& state, const BasicTensor<T>& noisy,
                      const BasicTensor<T>& clean);

inline StepResult train_step(ParamStore<float>& params, AdamState<float>& state,
                             const PatchBatch& batch) {
  return train_step(params, state, batch.noisy, batch.clean);
}

struct TrainOutputs {
  std::filesystem::path dir;

  std::filesystem::path latest() const { return dir / "checkpoint.bin"; }
  std::filesystem::path snapshot(std::uint64_t step) const;
  std::filesystem::path metrics() const { return dir / "metrics.tsv"; }
};

/// Runs training until `config.total_steps` steps have completed. Starts from
/// `resume` when given, otherwise from a He-initialized network. Batch k is
/// drawn from (seed, k), so a resumed run continues the uninterrupted one
/// exactly. Writes `checkpoint.bin` after initialization and every
/// `checkpoint_every` steps (plus numbered snapshots), and appends
/// step<TAB>loss<TAB>lr lines to `metrics.tsv`.
Checkpoint train_loop(const TrainConfig& config, const NetworkConfig& net, const Dataset& data,
                      const std::filesystem::path& out_dir,
                      const std::optional<Checkpoint>& resume = std::nullopt,
                      const std::function<void(std::uint64_t, const StepResult&)>& on_step = {});

}  // namespace ierd
