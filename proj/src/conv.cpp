#include "ierd/conv.hpp"

#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <thread>

namespace ierd {

namespace {

std::atomic<unsigned> g_threads{1};

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

/// Runs fn(i) for i in [0, count). Each index is processed by exactly one
/// thread; callers keep per-index outputs separate so results never depend on
/// the thread count.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const unsigned threads = std::min<std::size_t>(g_threads.load(), count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

template <typename T, int Slot>
std::vector<T>& scratch(std::size_t size) {
  thread_local std::vector<T> buf;
  if (buf.size() < size) buf.resize(size);
  return buf;
}

/// Zero-padded layout of one item. Every plane is (h + 2p) x (w + 2p); the tap
/// at (ky, kx) reads the contiguous run starting at shift(ky, kx), so each tap
/// is one GEMM over "wide" rows of w + 2p columns. The last 2p columns of a
/// wide row are scratch and never reach the output.
struct PadGeometry {
  std::size_t h, w, hp, wp, plane, tail, wide;

  PadGeometry(const ConvLayerSpec& s, std::size_t h_, std::size_t w_)
      : h(h_), w(w_), hp(h_ + 2 * s.padding), wp(w_ + 2 * s.padding), plane(hp * wp),
        tail(2 * s.padding), wide(h_ * wp) {}

  std::size_t shift(const ConvLayerSpec& s, std::size_t ky, std::size_t kx) const {
    return ky * s.dilation * wp + kx * s.dilation;
  }
  std::size_t padded_size(std::size_t channels) const { return channels * plane + tail; }
};

template <typename T>
void pad_item(const T* in, std::size_t channels, const PadGeometry& g, std::size_t p, T* dst) {
  std::fill(dst, dst + g.padded_size(channels), T(0));
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < g.h; ++y) {
      std::memcpy(dst + c * g.plane + (y + p) * g.wp + p, in + (c * g.h + y) * g.w, sizeof(T) * g.w);
    }
  }
}

template <typename T>
void crop_padded(const T* src, std::size_t channels, const PadGeometry& g, std::size_t p, T* out) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < g.h; ++y) {
      std::memcpy(out + (c * g.h + y) * g.w, src + c * g.plane + (y + p) * g.wp + p, sizeof(T) * g.w);
    }
  }
}

/// Tap-major copy of the weights: rows [t * out, (t + 1) * out) hold tap t.
template <typename T>
RowMat<T> taps_from_weight(const BasicTensor<T>& weight, const ConvLayerSpec& s) {
  const std::size_t kk = s.kernel * s.kernel;
  RowMat<T> taps(Eigen::Index(kk * s.out_channels), Eigen::Index(s.in_channels));
  for (std::size_t o = 0; o < s.out_channels; ++o) {
    for (std::size_t i = 0; i < s.in_channels; ++i) {
      const T* src = weight.data() + (o * s.in_channels + i) * kk;
      for (std::size_t t = 0; t < kk; ++t) {
        taps(Eigen::Index(t * s.out_channels + o), Eigen::Index(i)) = src[t];
      }
    }
  }
  return taps;
}

template <typename T>
using TapView = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using MutTapView = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
void check_input(const BasicTensor<T>& input, const ConvParams<T>& params, const ConvLayerSpec& spec,
                 const char* where) {
  spec.validate();
  if (input.shape().c != spec.in_channels) {
    throw std::invalid_argument(std::string(where) + ": input has " +
                                std::to_string(input.shape().c) + " channels, layer expects " +
                                std::to_string(spec.in_channels));
  }
  const Shape ws{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  if (!(params.weight.shape() == ws) || params.bias.size() != spec.out_channels) {
    throw std::invalid_argument(std::string(where) + ": parameter shape " +
                                params.weight.shape().str() + " does not match layer " + ws.str());
  }
}

}  // namespace

void ConvLayerSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) {
    throw std::invalid_argument("conv layer needs at least one input and output channel");
  }
  if (kernel % 2 == 0) throw std::invalid_argument("conv kernel must be odd");
  if (dilation == 0) throw std::invalid_argument("conv dilation must be >= 1");
  if (padding != dilation * (kernel / 2)) {
    throw std::invalid_argument("conv padding must equal dilation * (kernel / 2), got padding " +
                                std::to_string(padding) + " dilation " + std::to_string(dilation));
  }
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const ConvParams<T>& params,
                              const ConvLayerSpec& spec) {
  check_input(input, params, spec, "conv2d_forward");
  const Shape in = input.shape();
  BasicTensor<T> out(in.n, spec.out_channels, in.h, in.w);
  const PadGeometry geo(spec, in.h, in.w);
  const RowMat<T> taps = taps_from_weight(params.weight, spec);
  const auto cout = Eigen::Index(spec.out_channels), cin = Eigen::Index(spec.in_channels);
  const auto wide = Eigen::Index(geo.wide);
  const Eigen::OuterStride<> stride(Eigen::Index(geo.plane));

  parallel_for(in.n, [&](std::size_t n) {
    auto& pad = scratch<T, 0>(geo.padded_size(spec.in_channels));
    auto& acc = scratch<T, 1>(spec.out_channels * geo.wide);
    pad_item(input.plane(n, 0), spec.in_channels, geo, spec.padding, pad.data());
    MapMat<T> dst(acc.data(), cout, wide);
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      dst.row(Eigen::Index(o)).setConstant(params.bias[o]);
    }
    for (std::size_t ky = 0, t = 0; ky < spec.kernel; ++ky) {
      for (std::size_t kx = 0; kx < spec.kernel; ++kx, ++t) {
        TapView<T> src(pad.data() + geo.shift(spec, ky, kx), cin, wide, stride);
        dst.noalias() += taps.middleRows(Eigen::Index(t) * cout, cout) * src;
      }
    }
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      for (std::size_t y = 0; y < in.h; ++y) {
        std::memcpy(out.plane(n, o) + y * in.w, acc.data() + o * geo.wide + y * geo.wp, sizeof(T) * in.w);
      }
    }
  });
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvParams<T>& params,
                             const ConvLayerSpec& spec, const BasicTensor<T>& grad_out,
                             bool need_input_grad) {
  check_input(input, params, spec, "conv2d_backward");
  const Shape in = input.shape();
  const Shape expected{in.n, spec.out_channels, in.h, in.w};
  if (!(grad_out.shape() == expected)) {
    throw std::invalid_argument("conv2d_backward: grad_out shape " + grad_out.shape().str() +
                                " does not match output shape " + expected.str());
  }
  const PadGeometry geo(spec, in.h, in.w);
  const std::size_t kk = spec.kernel * spec.kernel;
  const std::size_t wsize = spec.out_channels * spec.in_channels * kk;
  const RowMat<T> taps = taps_from_weight(params.weight, spec);
  const auto cout = Eigen::Index(spec.out_channels), cin = Eigen::Index(spec.in_channels);
  const auto wide = Eigen::Index(geo.wide);
  const Eigen::OuterStride<> stride(Eigen::Index(geo.plane));

  ConvGrads<T> g;
  if (need_input_grad) g.input = BasicTensor<T>(in);
  g.weight = BasicTensor<T>(params.weight.shape());
  g.bias.assign(spec.out_channels, T(0));

  // Per-item gradients (tap-major), reduced below in item order.
  std::vector<T> item_weight(in.n * wsize);
  std::vector<double> item_bias(in.n * spec.out_channels);

  parallel_for(in.n, [&](std::size_t n) {
    auto& pad = scratch<T, 0>(geo.padded_size(spec.in_channels));
    auto& dyw = scratch<T, 1>(spec.out_channels * geo.wide);
    pad_item(input.plane(n, 0), spec.in_channels, geo, spec.padding, pad.data());
    // grad_out in wide rows; the scratch columns stay zero so they add nothing.
    std::fill(dyw.begin(), dyw.begin() + std::ptrdiff_t(spec.out_channels * geo.wide), T(0));
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      const T* row = grad_out.plane(n, o);
      double acc = 0.0;
      for (std::size_t i = 0; i < in.plane(); ++i) acc += double(row[i]);
      item_bias[n * spec.out_channels + o] = acc;
      for (std::size_t y = 0; y < in.h; ++y) {
        std::memcpy(dyw.data() + o * geo.wide + y * geo.wp, row + y * in.w, sizeof(T) * in.w);
      }
    }
    ConstMapMat<T> dy(dyw.data(), cout, wide);
    MapMat<T> dw(item_weight.data() + n * wsize, Eigen::Index(kk) * cout, cin);
    for (std::size_t ky = 0, t = 0; ky < spec.kernel; ++ky) {
      for (std::size_t kx = 0; kx < spec.kernel; ++kx, ++t) {
        TapView<T> src(pad.data() + geo.shift(spec, ky, kx), cin, wide, stride);
        dw.middleRows(Eigen::Index(t) * cout, cout).noalias() = dy * src.transpose();
      }
    }
    if (need_input_grad) {
      const std::size_t size = geo.padded_size(spec.in_channels);
      auto& dpad = scratch<T, 2>(size);
      std::fill(dpad.begin(), dpad.begin() + std::ptrdiff_t(size), T(0));
      for (std::size_t ky = 0, t = 0; ky < spec.kernel; ++ky) {
        for (std::size_t kx = 0; kx < spec.kernel; ++kx, ++t) {
          MutTapView<T> dst(dpad.data() + geo.shift(spec, ky, kx), cin, wide, stride);
          dst.noalias() += taps.middleRows(Eigen::Index(t) * cout, cout).transpose() * dy;
        }
      }
      crop_padded(dpad.data(), spec.in_channels, geo, spec.padding, g.input.plane(n, 0));
    }
  });

  for (std::size_t n = 0; n < in.n; ++n) {
    const T* src = item_weight.data() + n * wsize;
    T* dst = g.weight.data();
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
      for (std::size_t i = 0; i < spec.in_channels; ++i) {
        for (std::size_t t = 0; t < kk; ++t) {
          dst[(o * spec.in_channels + i) * kk + t] += src[(t * spec.out_channels + o) * spec.in_channels + i];
        }
      }
    }
  }
  for (std::size_t o = 0; o < spec.out_channels; ++o) {
    double acc = 0.0;
    for (std::size_t n = 0; n < in.n; ++n) acc += item_bias[n * spec.out_channels + o];
    g.bias[o] = static_cast<T>(acc);
  }
  return g;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  const T* src = input.data();
  T* dst = out.data();
  for (std::size_t i = 0; i < input.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_out) {
  input.require_same_shape(grad_out, "relu_backward");
  BasicTensor<T> out(input.shape());
  const T* x = input.data();
  const T* g = grad_out.data();
  T* dst = out.data();
  for (std::size_t i = 0; i < input.size(); ++i) dst[i] = x[i] > T(0) ? g[i] : T(0);
  return out;
}

ConvParams<float> he_init(const ConvLayerSpec& spec, std::uint64_t rng_seed) {
  spec.validate();
  ConvParams<float> p(spec);
  const double stddev = std::sqrt(2.0 / double(spec.in_channels * spec.kernel * spec.kernel));
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> normal(0.0, stddev);
  for (auto& v : p.weight.values()) v = static_cast<float>(normal(rng));
  return p;
}

template <typename T>
ConvParams<T> identity_params(const ConvLayerSpec& spec) {
  spec.validate();
  ConvParams<T> p(spec);
  const std::size_t c = spec.kernel / 2;
  for (std::size_t o = 0; o < std::min(spec.in_channels, spec.out_channels); ++o) {
    p.weight.at(o, o, c, c) = T(1);
  }
  return p;
}

std::size_t receptive_field(std::span<const std::size_t> dilations, std::size_t kernel) {
  if (kernel % 2 == 0) throw std::invalid_argument("receptive_field: kernel must be odd");
  return 1 + (kernel - 1) * std::accumulate(dilations.begin(), dilations.end(), std::size_t{0});
}

void set_num_threads(unsigned n) { g_threads = std::max(1u, n); }
unsigned num_threads() { return g_threads; }

#define IERD_INSTANTIATE(T)                                                                    \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const ConvParams<T>&,         \
                                         const ConvLayerSpec&);                               \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const ConvParams<T>&,          \
                                        const ConvLayerSpec&, const BasicTensor<T>&, bool);   \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);        \
  template ConvParams<T> identity_params(const ConvLayerSpec&);

IERD_INSTANTIATE(float)
IERD_INSTANTIATE(double)
#undef IERD_INSTANTIATE

}  // namespace ierd
