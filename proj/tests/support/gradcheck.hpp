#pragma once

// Central finite differences of <g, ierd_forward(y)> over network parameters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ierd/network.hpp"

namespace ierd::testing {

struct CoordCheck {
  std::size_t entry = 0;
  bool bias = false;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error() const { return std::abs(analytic - numeric) / (std::abs(numeric) + 1e-8); }
};

template <typename T>
std::vector<bool> relu_signs(const TensorD& y, const ParamStore<T>& p) {
  const auto pd = p.template cast<double>();
  ForwardTrace<double> trace;
  ierd_forward(y, pd, &trace);
  std::vector<bool> signs;
  for (const auto& m : trace.modules)
    for (const auto& t : m.pre)
      for (double v : t.values()) signs.push_back(v > 0);
  return signs;
}

inline double& coord(ParamStore<double>& p, const CoordCheck& c) {
  auto& e = p.entries()[c.entry];
  return c.bias ? e.params.bias[c.index] : e.params.weight[c.index];
}

/// Samples `count` parameter coordinates uniformly over all scalars, skipping
/// any whose +/- eps perturbation flips a ReLU input sign (kink exclusion).
/// The numeric side always runs in double; analytic gradients come from
/// `params` in its own precision.
template <typename T>
std::vector<CoordCheck> gradient_check(ParamStore<T> params, const BasicTensor<T>& y,
                                       const BasicTensor<T>& g, std::size_t count,
                                       std::uint64_t seed, double eps = 1e-3) {
  ForwardTrace<T> trace;
  ierd_forward(y, params, &trace);
  ierd_backward(trace, g, params);

  ParamStore<double> pd = params.template cast<double>();
  const TensorD yd = y.template cast<double>(), gd = g.template cast<double>();
  const auto base_signs = relu_signs(yd, pd);

  std::vector<std::pair<std::size_t, std::size_t>> all;  // (entry, flat index incl. bias)
  for (std::size_t e = 0; e < pd.entries().size(); ++e) {
    const auto& en = pd.entries()[e];
    for (std::size_t i = 0; i < en.params.weight.size() + en.params.bias.size(); ++i) all.emplace_back(e, i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);

  std::vector<CoordCheck> out;
  for (const auto& [e, flat] : all) {
    if (out.size() == count) break;
    const auto& en = params.entries()[e];
    CoordCheck c;
    c.entry = e;
    c.bias = flat >= en.params.weight.size();
    c.index = c.bias ? flat - en.params.weight.size() : flat;
    c.analytic = c.bias ? double(en.grads.bias[c.index]) : double(en.grads.weight[c.index]);

    double& slot = coord(pd, c);
    const double keep = slot;
    slot = keep + eps;
    const bool kink_up = relu_signs(yd, pd) != base_signs;
    const double up = dot(gd, ierd_forward(yd, pd));
    slot = keep - eps;
    const bool kink_down = relu_signs(yd, pd) != base_signs;
    const double down = dot(gd, ierd_forward(yd, pd));
    slot = keep;
    if (kink_up || kink_down) continue;
    c.numeric = (up - down) / (2 * eps);
    out.push_back(c);
  }
  return out;
}

}  // namespace ierd::testing
