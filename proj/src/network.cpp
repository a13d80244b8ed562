#include "ierd/network.hpp"

#include <stdexcept>

#include "ierd/rng.hpp"

namespace ierd {

std::vector<std::size_t> NetworkConfig::default_dilations(std::size_t layers, std::size_t rest) {
  std::vector<std::size_t> d(layers, rest);
  if (!d.empty()) d.front() = 1;
  return d;
}

NetworkConfig NetworkConfig::make(std::size_t modules, std::size_t layers, std::size_t channels,
                                  std::size_t image_channels) {
  NetworkConfig c;
  c.modules = modules;
  c.layers = layers;
  c.channels = channels;
  c.image_channels = image_channels;
  c.dilations = default_dilations(layers);
  return c;
}

void NetworkConfig::validate() const {
  if (modules < 1) throw std::invalid_argument("network: modules must be >= 1");
  if (layers < 2) throw std::invalid_argument("network: layers must be >= 2");
  if (channels < 1) throw std::invalid_argument("network: channels must be >= 1");
  if (image_channels != 1 && image_channels != 3) {
    throw std::invalid_argument("network: image_channels must be 1 or 3");
  }
  if (kernel % 2 == 0) throw std::invalid_argument("network: kernel must be odd");
  if (dilations.size() != layers) {
    throw std::invalid_argument("network: dilation schedule has " +
                                std::to_string(dilations.size()) + " entries for " +
                                std::to_string(layers) + " layers");
  }
  for (auto d : dilations) {
    if (d < 1) throw std::invalid_argument("network: dilations must be >= 1");
  }
}

ConvLayerSpec NetworkConfig::layer_spec(std::size_t module, std::size_t layer) const {
  const std::size_t in = (module == 0 && layer == 0) ? image_channels : channels;
  return ConvLayerSpec::same(in, channels, dilations.at(layer), kernel);
}

ConvLayerSpec NetworkConfig::final_spec() const {
  return ConvLayerSpec::same(channels, image_channels, 1, kernel);
}

std::size_t NetworkConfig::receptive_radius() const {
  std::size_t per_module = 0;
  for (auto d : dilations) per_module += d * (kernel / 2);
  return modules * per_module + kernel / 2;
}

std::string LayerId::name() const {
  if (is_final()) return "final";
  return "m" + std::to_string(module) + ".l" + std::to_string(layer);
}

template <typename T>
ParamStore<T>::ParamStore(const NetworkConfig& config) : config_(config) {
  config.validate();
  entries_.reserve(config.modules * config.layers + 1);
  for (std::size_t m = 0; m < config.modules; ++m) {
    for (std::size_t l = 0; l < config.layers; ++l) {
      const auto spec = config.layer_spec(m, l);
      entries_.push_back({LayerId{m, l}, spec, ConvParams<T>(spec), ConvParams<T>(spec)});
    }
  }
  const auto spec = config.final_spec();
  entries_.push_back({LayerId{LayerId::kFinal, 0}, spec, ConvParams<T>(spec), ConvParams<T>(spec)});
}

template <typename T>
void ParamStore<T>::zero_grads() {
  for (auto& e : entries_) e.grads.zero();
}

template <typename T>
std::size_t ParamStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.params.weight.size() + e.params.bias.size();
  return n;
}

template <typename T>
template <typename U>
ParamStore<U> ParamStore<T>::cast() const {
  ParamStore<U> out;
  out.config_ = config_;
  out.version_ = version_;
  out.entries_.reserve(entries_.size());
  for (const auto& e : entries_) {
    out.entries_.push_back({e.id, e.spec, e.params.template cast<U>(), e.grads.template cast<U>()});
  }
  return out;
}

ParamStore<float> init_params(const NetworkConfig& config, std::uint64_t seed) {
  ParamStore<float> store(config);
  std::uint64_t index = 0;
  for (auto& e : store.entries()) e.params = he_init(e.spec, derive_seed(seed, {0x1e7d, index++}));
  return store;
}

template <typename T>
ParamStore<T> identity_network(const NetworkConfig& config) {
  ParamStore<T> store(config);
  if (config.lifts_input()) {
    for (std::size_t l = 0; l < config.layers; ++l) {
      auto& e = store.layer(0, l);
      e.params = identity_params<T>(e.spec);
    }
  }
  store.final_layer().params = identity_params<T>(store.final_layer().spec);
  return store;
}

template <typename T>
BasicTensor<T> module_forward(const BasicTensor<T>& y, const ParamStore<T>& params,
                              std::size_t module, ModuleTrace<T>* trace) {
  const NetworkConfig& cfg = params.config();
  if (module >= cfg.modules) throw std::out_of_range("module_forward: module index out of range");
  const auto& first_spec = params.layer(module, 0).spec;
  if (y.shape().c != first_spec.in_channels) {
    throw std::invalid_argument("module_forward: input has " + std::to_string(y.shape().c) +
                                " channels, module " + std::to_string(module) + " expects " +
                                std::to_string(first_spec.in_channels));
  }

  ModuleTrace<T> local;
  ModuleTrace<T>& t = trace ? *trace : local;
  t.pre.clear();
  t.post.clear();
  t.pre.reserve(cfg.layers);
  t.post.reserve(cfg.layers);

  BasicTensor<T> h = y;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const auto& e = params.layer(module, l);
    t.pre.push_back(std::move(h));
    t.post.push_back(relu_forward(t.pre.back()));
    h = conv2d_forward(t.post.back(), e.params, e.spec);
    // Only the first-pair output is needed after the loop when not tracing.
    if (!trace && l > 1) {
      t.pre.back() = BasicTensor<T>();
      t.post.back() = BasicTensor<T>();
    }
  }
  const BasicTensor<T>& first = t.first();
  const bool lift = module == 0 && cfg.lifts_input();
  BasicTensor<T> residual = h - first;
  BasicTensor<T> out = lift ? first : t.pre.front();
  out += residual;
  return out;
}

template <typename T>
BasicTensor<T> ierd_forward(const BasicTensor<T>& y, const ParamStore<T>& params,
                            ForwardTrace<T>* trace) {
  const NetworkConfig& cfg = params.config();
  if (y.shape().c != cfg.image_channels) {
    throw std::invalid_argument("ierd_forward: input has " + std::to_string(y.shape().c) +
                                " channels, network expects " + std::to_string(cfg.image_channels));
  }
  if (!y.all_finite()) throw std::invalid_argument("ierd_forward: input contains NaN or Inf");

  if (trace) {
    trace->params_owner = &params;
    trace->params_version = params.version();
    trace->input_shape = y.shape();
    trace->modules.assign(cfg.modules, {});
  }
  BasicTensor<T> h = y;
  for (std::size_t m = 0; m < cfg.modules; ++m) {
    h = module_forward(h, params, m, trace ? &trace->modules[m] : nullptr);
  }
  const auto& fin = params.final_layer();
  BasicTensor<T> out = conv2d_forward(h, fin.params, fin.spec);
  if (trace) trace->final_input = std::move(h);
  return out;
}

template <typename T>
BasicTensor<T> ierd_backward(const ForwardTrace<T>& trace, const BasicTensor<T>& grad_out,
                             ParamStore<T>& params, bool need_input_grad) {
  const NetworkConfig& cfg = params.config();
  if (trace.params_owner != &params || trace.params_version != params.version() ||
      trace.modules.size() != cfg.modules) {
    throw std::logic_error("ierd_backward: trace does not belong to the current parameters");
  }
  const Shape expected{trace.input_shape.n, cfg.image_channels, trace.input_shape.h,
                       trace.input_shape.w};
  if (!(grad_out.shape() == expected)) {
    throw std::invalid_argument("ierd_backward: gradient shape " + grad_out.shape().str() +
                                " does not match output shape " + expected.str());
  }

  auto& fin = params.final_layer();
  auto fg = conv2d_backward(trace.final_input, fin.params, fin.spec, grad_out);
  fin.grads.weight = std::move(fg.weight);
  fin.grads.bias = std::move(fg.bias);
  BasicTensor<T> g = std::move(fg.input);

  for (std::size_t m = cfg.modules; m-- > 0;) {
    const ModuleTrace<T>& mt = trace.modules[m];
    const bool lift = m == 0 && cfg.lifts_input();
    BasicTensor<T> grad_h = g;
    for (std::size_t l = cfg.layers; l-- > 0;) {
      auto& e = params.layer(m, l);
      const bool want_input = l > 0 || m > 0 || need_input_grad;
      auto cg = conv2d_backward(mt.post[l], e.params, e.spec, grad_h, want_input);
      e.grads.weight = std::move(cg.weight);
      e.grads.bias = std::move(cg.bias);
      if (!want_input) break;
      grad_h = relu_backward(mt.pre[l], cg.input);
      // The first-pair output is subtracted from the chain; a lifting module
      // also uses it as its skip, so the two contributions cancel.
      if (l == 1 && !lift) grad_h -= g;
    }
    if (m > 0 || need_input_grad) {
      if (!lift) grad_h += g;
      g = std::move(grad_h);
    }
  }
  return (need_input_grad) ? g : BasicTensor<T>();
}

std::size_t num_params(const NetworkConfig& config) {
  config.validate();
  std::size_t n = 0;
  for (std::size_t m = 0; m < config.modules; ++m) {
    for (std::size_t l = 0; l < config.layers; ++l) n += config.layer_spec(m, l).param_count();
  }
  return n + config.final_spec().param_count();
}

template class ParamStore<float>;
template class ParamStore<double>;
template ParamStore<double> ParamStore<float>::cast<double>() const;
template ParamStore<float> ParamStore<double>::cast<float>() const;
template ParamStore<float> ParamStore<float>::cast<float>() const;
template ParamStore<double> ParamStore<double>::cast<double>() const;

#define IERD_INSTANTIATE(T)                                                                  \
  template ParamStore<T> identity_network<T>(const NetworkConfig&);                         \
  template BasicTensor<T> module_forward(const BasicTensor<T>&, const ParamStore<T>&,       \
                                         std::size_t, ModuleTrace<T>*);                     \
  template BasicTensor<T> ierd_forward(const BasicTensor<T>&, const ParamStore<T>&,         \
                                       ForwardTrace<T>*);                                   \
  template BasicTensor<T> ierd_backward(const ForwardTrace<T>&, const BasicTensor<T>&,      \
                                        ParamStore<T>&, bool);

IERD_INSTANTIATE(float)
IERD_INSTANTIATE(double)
#undef IERD_INSTANTIATE

}  // namespace ierd
