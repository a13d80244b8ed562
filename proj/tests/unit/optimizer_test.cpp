#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ierd/optimizer.hpp"
#include "oracles.hpp"

using namespace ierd;

namespace {

const NetworkConfig kTiny = NetworkConfig::make(1, 2, 1, 1);  // 30 scalars

template <typename F>
void for_each_scalar(ParamStore<double>& p, F f) {
  for (auto& e : p.entries()) {
    for (std::size_t i = 0; i < e.params.weight.size(); ++i) f(e.params.weight[i], e.grads.weight[i]);
    for (std::size_t i = 0; i < e.params.bias.size(); ++i) f(e.params.bias[i], e.grads.bias[i]);
  }
}

// Plain Adam with decoupled decay, one scalar at a time.
struct RefAdam {
  double m = 0, v = 0;
  std::uint64_t t = 0;
  double step(double theta, double g, const AdamHyper& h) {
    const double lr = h.base_lr * std::pow(0.5, std::floor(double(t) / double(h.halving_period)));
    ++t;
    m = h.beta1 * m + (1 - h.beta1) * g;
    v = h.beta2 * v + (1 - h.beta2) * g * g;
    const double mh = m / (1 - std::pow(h.beta1, double(t)));
    const double vh = v / (1 - std::pow(h.beta2, double(t)));
    return theta - lr * (mh / (std::sqrt(vh) + h.eps) + h.weight_decay * theta);
  }
};

}  // namespace

TEST(LrSchedule, HalvesAtPeriodMultiples) {
  EXPECT_EQ(lr_at(0, 1e-4, 100000), 1e-4);
  EXPECT_EQ(lr_at(99999, 1e-4, 100000), 1e-4);
  EXPECT_EQ(lr_at(100000, 1e-4, 100000), 5e-5);
  EXPECT_EQ(lr_at(250000, 1e-4, 100000), 2.5e-5);
  EXPECT_EQ(lr_at(300000, 1e-4, 100000), 1.25e-5);
  for (std::uint64_t k = 0; k < 40; ++k) {
    EXPECT_EQ(lr_at(k * 7, 3e-3, 7), 3e-3 * std::pow(0.5, double(k)));
    if (k) {
      EXPECT_EQ(lr_at(k * 7 - 1, 3e-3, 7), 3e-3 * std::pow(0.5, double(k - 1)));
    }
  }
}

TEST(Adam, HyperDefaults) {
  const AdamHyper h;
  EXPECT_EQ(h.beta1, 0.9);
  EXPECT_EQ(h.beta2, 0.999);
  EXPECT_EQ(h.eps, 1e-8);
  EXPECT_EQ(h.base_lr, 1e-4);
  EXPECT_EQ(h.halving_period, 100000u);
  EXPECT_EQ(h.weight_decay, 1e-3);
  AdamHyper bad;
  bad.weight_decay = -1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Adam, SingleStepByHand) {
  ParamStore<double> p(kTiny);
  for_each_scalar(p, [](double& th, double& g) { th = 1.0; g = 1.0; });
  AdamHyper h;
  h.weight_decay = 0;
  AdamState<double> s(p, h);
  EXPECT_EQ(adam_step(p, s), 1e-4);
  EXPECT_EQ(s.step, 1u);
  const double want = 1.0 - 1e-4 / (1.0 + 1e-8);
  for_each_scalar(p, [&](double& th, double&) { EXPECT_NEAR(th, want, 1e-12); });
}

TEST(Adam, TwoStepsMatchReference) {
  ParamStore<double> p(kTiny);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for_each_scalar(p, [&](double& th, double& g) { th = u(rng); g = u(rng); });
  std::vector<double> theta, grad;
  for_each_scalar(p, [&](double& th, double& g) { theta.push_back(th); grad.push_back(g); });
  AdamHyper h;
  AdamState<double> s(p, h);
  std::vector<RefAdam> ref(theta.size());
  for (int step = 0; step < 2; ++step) {
    adam_step(p, s);
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = ref[i].step(theta[i], grad[i], h);
  }
  std::size_t i = 0;
  for_each_scalar(p, [&](double& th, double&) { EXPECT_NEAR(th, theta[i++], 1e-12); });
}

TEST(Adam, ManyStepsAcrossHalvingMatchReference) {
  ParamStore<double> p(kTiny);
  AdamHyper h;
  h.halving_period = 3;
  h.base_lr = 1e-2;
  AdamState<double> s(p, h);
  std::vector<double> theta(30, 0.5);
  for_each_scalar(p, [](double& th, double&) { th = 0.5; });
  std::vector<RefAdam> ref(30);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  for (int step = 0; step < 10; ++step) {
    std::vector<double> grad;
    for_each_scalar(p, [&](double&, double& g) { g = n(rng); grad.push_back(g); });
    const double lr = adam_step(p, s);
    EXPECT_EQ(lr, 1e-2 * std::pow(0.5, step / 3));
    for (std::size_t i = 0; i < 30; ++i) theta[i] = ref[i].step(theta[i], grad[i], h);
  }
  std::size_t i = 0;
  for_each_scalar(p, [&](double& th, double&) { EXPECT_NEAR(th, theta[i++], 1e-12); });
}

TEST(Adam, ZeroGradientWithoutDecayIsIdentity) {
  auto p = init_params(NetworkConfig::make(1, 2, 4, 1), 3);
  const auto before = p;
  AdamHyper h;
  h.weight_decay = 0;
  AdamState<float> s(p, h);
  for (int i = 0; i < 5; ++i) adam_step(p, s);
  for (std::size_t e = 0; e < p.entries().size(); ++e) {
    EXPECT_EQ(p.entries()[e].params, before.entries()[e].params);
  }
}

TEST(Adam, UpdateMagnitudeBound) {
  ParamStore<double> p(kTiny);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 3);
  for_each_scalar(p, [&](double& th, double&) { th = n(rng); });
  AdamHyper h;
  h.base_lr = 1e-2;
  h.halving_period = 4;
  AdamState<double> s(p, h);
  for (int step = 0; step < 12; ++step) {
    std::vector<double> before;
    for_each_scalar(p, [&](double& th, double& g) { before.push_back(th); g = n(rng); });
    const double lr = adam_step(p, s);
    std::size_t i = 0;
    for_each_scalar(p, [&](double& th, double&) {
      const double bound = lr * (1 / (1 - h.beta1) + h.weight_decay * std::abs(before[i]));
      EXPECT_LE(std::abs(th - before[i]), bound);
      ++i;
    });
  }
}

TEST(Adam, Deterministic) {
  auto a = init_params(NetworkConfig::make(1, 2, 3, 1), 5);
  for (auto& e : a.entries()) e.grads.weight = ierd::testing::random_tensor<float>(e.grads.weight.shape(), 6);
  auto b = a;
  AdamState<float> sa(a, {}), sb(b, {});
  adam_step(a, sa);
  adam_step(b, sb);
  EXPECT_EQ(sa, sb);
  for (std::size_t e = 0; e < a.entries().size(); ++e) EXPECT_EQ(a.entries()[e].params, b.entries()[e].params);
}

TEST(Adam, RejectsNonFiniteGradientUntouched) {
  auto p = init_params(NetworkConfig::make(1, 2, 3, 1), 7);
  AdamState<float> s(p, {});
  p.layer(0, 1).grads.weight[4] = std::numeric_limits<float>::infinity();
  const auto before = p;
  try {
    adam_step(p, s);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("m0.l1"), std::string::npos) << e.what();
  }
  EXPECT_EQ(s.step, 0u);
  for (std::size_t e = 0; e < p.entries().size(); ++e) EXPECT_EQ(p.entries()[e].params, before.entries()[e].params);
}

TEST(Adam, RejectsMismatchedState) {
  auto p = init_params(NetworkConfig::make(1, 2, 3, 1), 8);
  auto q = init_params(NetworkConfig::make(2, 2, 3, 1), 8);
  AdamState<float> s(q, {});
  EXPECT_THROW(adam_step(p, s), std::invalid_argument);
}
