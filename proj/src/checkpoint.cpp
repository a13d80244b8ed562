#include "ierd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "ierd/errors.hpp"

namespace ierd {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'I', 'E', 'R', 'D', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void u64(std::uint64_t v) { pod(v); }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), std::streamsize(s.size()));
  }
  void floats(std::span<const float> v) {
    u64(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size_bytes()));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) fail("unexpected end of file");
    return v;
  }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > 4096) fail("corrupt string length");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) fail("unexpected end of file");
    return s;
  }
  void floats(std::span<float> dst, const std::string& what) {
    if (u64() != dst.size()) fail("size mismatch in " + what);
    in_.read(reinterpret_cast<char*>(dst.data()), std::streamsize(dst.size_bytes()));
    if (!in_) fail("unexpected end of file in " + what);
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw IoError(origin_ + ": invalid checkpoint: " + msg);
  }

 private:
  std::istream& in_;
  std::string origin_;
};

void write_conv(Writer& w, const ConvParams<float>& p) {
  w.floats(p.weight.values());
  w.floats(p.bias);
}

void read_conv(Reader& r, ConvParams<float>& p, const std::string& name) {
  r.floats(p.weight.values(), name + ".weight");
  r.floats(p.bias, name + ".bias");
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const NetworkConfig& cfg = ckpt.params.config();
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp.string() + ": cannot open for writing");
    Writer w(out);
    out.write(kMagic, sizeof(kMagic));
    w.pod(kCheckpointVersion);
    w.u64(cfg.modules);
    w.u64(cfg.layers);
    w.u64(cfg.channels);
    w.u64(cfg.image_channels);
    w.u64(cfg.kernel);
    for (auto d : cfg.dilations) w.u64(d);
    w.u64(ckpt.step);
    w.u64(ckpt.seed);

    w.u64(ckpt.params.entries().size());
    for (const auto& e : ckpt.params.entries()) {
      w.str(e.id.name());
      const Shape s = e.params.weight.shape();
      w.u64(s.n);
      w.u64(s.c);
      w.u64(s.h);
      w.u64(s.w);
      write_conv(w, e.params);
    }

    w.pod(static_cast<std::uint8_t>(ckpt.optimizer.has_value()));
    if (ckpt.optimizer) {
      const auto& st = *ckpt.optimizer;
      w.pod(st.hyper.beta1);
      w.pod(st.hyper.beta2);
      w.pod(st.hyper.eps);
      w.pod(st.hyper.base_lr);
      w.u64(st.hyper.halving_period);
      w.pod(st.hyper.weight_decay);
      w.u64(st.step);
      for (std::size_t i = 0; i < st.m.size(); ++i) {
        write_conv(w, st.m[i]);
        write_conv(w, st.v[i]);
      }
    }
    out.flush();
    if (!out) throw IoError(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open checkpoint");
  Reader r(in, path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) r.fail("bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported format version " + std::to_string(version));

  NetworkConfig cfg;
  cfg.modules = r.u64();
  cfg.layers = r.u64();
  cfg.channels = r.u64();
  cfg.image_channels = r.u64();
  cfg.kernel = r.u64();
  if (cfg.layers > 100000) r.fail("corrupt layer count");
  cfg.dilations.resize(cfg.layers);
  for (auto& d : cfg.dilations) d = r.u64();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }

  Checkpoint ckpt;
  ckpt.step = r.u64();
  ckpt.seed = r.u64();
  ckpt.params = ParamStore<float>(cfg);
  if (r.u64() != ckpt.params.entries().size()) r.fail("layer count does not match config");
  for (auto& e : ckpt.params.entries()) {
    const std::string name = r.str();
    if (name != e.id.name()) r.fail("expected layer " + e.id.name() + ", found " + name);
    const Shape s{r.u64(), r.u64(), r.u64(), r.u64()};
    if (!(s == e.params.weight.shape())) r.fail("shape mismatch in layer " + name);
    read_conv(r, e.params, name);
  }

  if (r.pod<std::uint8_t>()) {
    AdamHyper h;
    h.beta1 = r.pod<double>();
    h.beta2 = r.pod<double>();
    h.eps = r.pod<double>();
    h.base_lr = r.pod<double>();
    h.halving_period = r.u64();
    h.weight_decay = r.pod<double>();
    AdamState<float> st(ckpt.params, h);
    st.step = r.u64();
    for (std::size_t i = 0; i < st.m.size(); ++i) {
      const std::string name = ckpt.params.entries()[i].id.name();
      read_conv(r, st.m[i], name + ".m");
      read_conv(r, st.v[i], name + ".v");
    }
    ckpt.optimizer = std::move(st);
  }
  if (in.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes");
  return ckpt;
}

}  // namespace ierd
