#include "ierd/optimizer.hpp"

#include <cmath>
#include <sstream>

namespace ierd {

void AdamHyper::validate() const {
  if (!(beta1 > 0 && beta1 < 1)) throw std::invalid_argument("adam: beta1 must be in (0, 1)");
  if (!(beta2 > 0 && beta2 < 1)) throw std::invalid_argument("adam: beta2 must be in (0, 1)");
  if (!(eps > 0)) throw std::invalid_argument("adam: eps must be > 0");
  if (!(base_lr > 0)) throw std::invalid_argument("adam: base_lr must be > 0");
  if (halving_period == 0) throw std::invalid_argument("adam: halving_period must be > 0");
  if (!(weight_decay >= 0)) throw std::invalid_argument("adam: weight_decay must be >= 0");
}

double lr_at(std::uint64_t step, double base_lr, std::uint64_t halving_period) {
  return std::ldexp(base_lr, -static_cast<int>(std::min<std::uint64_t>(step / halving_period, 2000)));
}

template <typename T>
AdamState<T>::AdamState(const ParamStore<T>& params, AdamHyper h) : hyper(h) {
  hyper.validate();
  for (const auto& e : params.entries()) {
    m.emplace_back(e.spec);
    v.emplace_back(e.spec);
  }
}

namespace {

template <typename T>
void check_finite(const ParamStore<T>& params) {
  for (const auto& e : params.entries()) {
    std::size_t bad = 0;
    double max_abs = 0;
    for (T g : e.grads.weight.values()) {
      if (!std::isfinite(g)) ++bad; else max_abs = std::max(max_abs, std::abs(double(g)));
    }
    std::size_t bad_bias = 0;
    for (T g : e.grads.bias) {
      if (!std::isfinite(g)) ++bad_bias;
    }
    if (bad || bad_bias) {
      std::ostringstream msg;
      msg << "non-finite gradient in layer " << e.id.name() << ": " << bad << " weight and "
          << bad_bias << " bias entries are NaN/Inf (max finite |g| = " << max_abs << ")";
      throw NumericalError(msg.str());
    }
  }
}

template <typename T>
void update(T* theta, const T* grad, T* m, T* v, std::size_t n, const AdamHyper& h, double lr,
            double bc1, double bc2) {
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    const double mi = h.beta1 * double(m[i]) + (1.0 - h.beta1) * g;
    const double vi = h.beta2 * double(v[i]) + (1.0 - h.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    const double th = theta[i];
    theta[i] = static_cast<T>(th - lr * (mhat / (std::sqrt(vhat) + h.eps) + h.weight_decay * th));
  }
}

}  // namespace

template <typename T>
double adam_step(ParamStore<T>& params, AdamState<T>& state) {
  if (state.m.size() != params.entries().size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameter store");
  }
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    const auto& e = params.entries()[i];
    if (!(state.m[i].weight.shape() == e.params.weight.shape()) ||
        !(state.v[i].weight.shape() == e.params.weight.shape()) ||
        !(e.grads.weight.shape() == e.params.weight.shape()) ||
        e.grads.bias.size() != e.params.bias.size()) {
      throw std::invalid_argument("adam_step: shape mismatch in layer " + e.id.name());
    }
  }
  check_finite(params);

  const AdamHyper& h = state.hyper;
  const double lr = lr_at(state.step, h.base_lr, h.halving_period);
  ++state.step;
  const double bc1 = 1.0 - std::pow(h.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(h.beta2, double(state.step));
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    auto& e = params.entries()[i];
    update(e.params.weight.data(), e.grads.weight.data(), state.m[i].weight.data(),
           state.v[i].weight.data(), e.params.weight.size(), h, lr, bc1, bc2);
    update(e.params.bias.data(), e.grads.bias.data(), state.m[i].bias.data(),
           state.v[i].bias.data(), e.params.bias.size(), h, lr, bc1, bc2);
  }
  params.bump_version();
  return lr;
}

template struct AdamState<float>;
template struct AdamState<double>;
template double adam_step(ParamStore<float>&, AdamState<float>&);
template double adam_step(ParamStore<double>&, AdamState<double>&);

}  // namespace ierd
