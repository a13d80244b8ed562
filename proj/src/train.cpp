#include "ierd/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace ierd {

void TrainConfig::validate() const {
  if (batch == 0) throw std::invalid_argument("train: batch must be >= 1");
  if (patch == 0) throw std::invalid_argument("train: patch must be >= 1");
  if (checkpoint_every == 0) throw std::invalid_argument("train: checkpoint_every must be >= 1");
  adam.validate();
  noise.validate();
}

template <typename T>
LossResult<T> mse_loss(const BasicTensor<T>& x_hat, const BasicTensor<T>& x) {
  x_hat.require_same_shape(x, "mse_loss");
  const double n = double(x.shape().n);
  LossResult<T> out;
  out.grad = BasicTensor<T>(x.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = double(x_hat[i]) - double(x[i]);
    sum += d * d;
    out.grad[i] = static_cast<T>(2.0 * d / n);
  }
  out.value = sum / n;
  return out;
}

template <typename T>
StepResult train_step(ParamStore<T>& params, AdamState<T>& state, const BasicTensor<T>& noisy,
                      const BasicTensor<T>& clean) {
  noisy.require_same_shape(clean, "train_step");
  ForwardTrace<T> trace;
  const BasicTensor<T> x_hat = ierd_forward(noisy, params, &trace);
  auto loss = mse_loss(x_hat, clean);
  if (!std::isfinite(loss.value)) {
    throw NumericalError("non-finite loss (" + std::to_string(loss.value) + ") at optimizer step " +
                         std::to_string(state.step) + "; parameters left unchanged");
  }
  ierd_backward(trace, loss.grad, params);
  StepResult r;
  r.loss = loss.value;
  try {
    r.lr = adam_step(params, state);
  } catch (...) {
    params.zero_grads();
    throw;
  }
  params.zero_grads();
  return r;
}

std::filesystem::path TrainOutputs::snapshot(std::uint64_t step) const {
  char name[64];
  std::snprintf(name, sizeof(name), "checkpoint_%08llu.bin", static_cast<unsigned long long>(step));
  return dir / name;
}

namespace {

// Keeps only log lines for steps before `step` so a resumed run rewrites the
// tail exactly as the uninterrupted run would have.
void truncate_metrics(const std::filesystem::path& path, std::uint64_t step) {
  std::vector<std::string> keep;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream fields(line);
      unsigned long long s = 0;
      if (fields >> s && s < step) keep.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot write metrics log");
  for (const auto& l : keep) out << l << '\n';
}

}  // namespace

Checkpoint train_loop(const TrainConfig& config, const NetworkConfig& net, const Dataset& data,
                      const std::filesystem::path& out_dir, const std::optional<Checkpoint>& resume,
                      const std::function<void(std::uint64_t, const StepResult&)>& on_step) {
  config.validate();
  net.validate();
  if (data.empty()) throw std::invalid_argument("train: dataset is empty");
  if (data.images.front().channels != net.image_channels) {
    throw std::invalid_argument("train: dataset has " + std::to_string(data.images.front().channels) +
                                " channels but the network expects " +
                                std::to_string(net.image_channels));
  }
  std::filesystem::create_directories(out_dir);
  const TrainOutputs outputs{out_dir};

  Checkpoint ckpt;
  if (resume) {
    ckpt = *resume;
    if (!(ckpt.params.config() == net)) {
      throw std::invalid_argument("train: resume checkpoint has a different network config");
    }
    if (!ckpt.optimizer) throw std::invalid_argument("train: resume checkpoint has no optimizer state");
    ckpt.optimizer->hyper = config.adam;
    truncate_metrics(outputs.metrics(), ckpt.step);
  } else {
    ckpt.params = init_params(net, config.seed);
    ckpt.optimizer = AdamState<float>(ckpt.params, config.adam);
    ckpt.step = 0;
    ckpt.seed = config.seed;
    std::ofstream(outputs.metrics(), std::ios::trunc);
    save_checkpoint(ckpt, outputs.latest());
    save_checkpoint(ckpt, outputs.snapshot(0));
  }

  const PatchSampler sampler(data, config.patch, config.batch, config.noise, config.seed);
  std::ofstream log(outputs.metrics(), std::ios::app);
  if (!log) throw IoError(outputs.metrics().string() + ": cannot open metrics log");
  log.precision(17);

  while (ckpt.step < config.total_steps) {
    const std::uint64_t step = ckpt.step;
    const PatchBatch batch = sampler.sample(step);
    const StepResult r = train_step(ckpt.params, *ckpt.optimizer, batch);
    ckpt.step = step + 1;
    log << step << '\t' << r.loss << '\t' << r.lr << '\n';
    if (on_step) on_step(step, r);
    if (ckpt.step % config.checkpoint_every == 0 || ckpt.step == config.total_steps) {
      log.flush();
      if (!log) throw IoError(outputs.metrics().string() + ": write failed");
      save_checkpoint(ckpt, outputs.latest());
      save_checkpoint(ckpt, outputs.snapshot(ckpt.step));
    }
  }
  log.flush();
  return ckpt;
}

template LossResult<float> mse_loss(const Tensor&, const Tensor&);
template LossResult<double> mse_loss(const TensorD&, const TensorD&);
template StepResult train_step(ParamStore<float>&, AdamState<float>&, const Tensor&, const Tensor&);
template StepResult train_step(ParamStore<double>&, AdamState<double>&, const TensorD&,
                               const TensorD&);

}  // namespace ierd
