#pragma once

#include <set>

#include "awb/autodiff.hpp"

namespace awb {

struct FireConfig {
  int squeeze_channels = 0;
  int expand1x1_channels = 0;
  int expand3x3_channels = 0;

  int out_channels() const { return expand1x1_channels + expand3x3_channels; }

  void validate() const {
    if (squeeze_channels < 1 || expand1x1_channels < 1 || expand3x3_channels < 1)
      throw Error(ErrorKind::Config, "fire module channel counts must be > 0");
  }
};

struct BackboneConfig {
  int conv1_channels = 64;
  int conv1_kernel = 3;
  int conv1_stride = 2;
  std::vector<FireConfig> fires;       // fire2..fire8
  std::set<int> pool_after;            // fire indices (0-based) followed by a 2x2/2 pool;
                                       // -1 pools right after conv1
  bool extra_pool = true;

  int out_channels() const { return fires.empty() ? conv1_channels : fires.back().out_channels(); }

  int total_stride() const {
    int s = conv1_stride;
    for (int p : pool_after) {
      (void)p;
      s *= 2;
    }
    if (extra_pool) s *= 2;
    return s;
  }

  void validate() const {
    if (conv1_channels < 1 || conv1_kernel < 1 || conv1_stride < 1)
      throw Error(ErrorKind::Config, "invalid conv1 configuration");
    for (const auto& f : fires) f.validate();
    const int s = total_stride();
    if (s & (s - 1)) throw Error(ErrorKind::Config, "backbone total stride must be a power of 2");
  }

  // SqueezeNet v1.1 topology, conv1..fire8 truncation.
  static BackboneConfig full() {
    BackboneConfig c;
    c.conv1_channels = 64;
    c.fires = {{16, 64, 64},   {16, 64, 64},   {32, 128, 128}, {32, 128, 128},
               {48, 192, 192}, {48, 192, 192}, {64, 256, 256}};
    c.pool_after = {-1, 1, 3};
    return c;
  }

  // Desk-scale variant: same shape, far fewer channels, 64-channel output.
  static BackboneConfig tiny() {
    BackboneConfig c;
    c.conv1_channels = 8;
    c.fires = {{4, 8, 8},   {4, 8, 8},   {8, 16, 16}, {8, 16, 16},
               {8, 16, 16}, {8, 16, 16}, {16, 32, 32}};
    c.pool_after = {-1, 1, 3};
    return c;
  }
};

template <class T>
struct ConvParams {
  ParamPtr<T> w;
  ParamPtr<T> b;
};

template <class T>
struct FireParams {
  ConvParams<T> squeeze;
  ConvParams<T> expand1x1;
  ConvParams<T> expand3x3;
};

template <class T>
struct BackboneParams {
  ConvParams<T> conv1;
  std::vector<FireParams<T>> fires;
};

// Collects parameters in creation order; the order defines checkpoint layout.
template <class T>
class ParamStore {
public:
  ParamPtr<T> create(const std::string& name, Tensor<T> init) {
    for (const auto& p : list_)
      if (p->name == name) throw Error(ErrorKind::Config, "duplicate parameter name '" + name + "'");
    auto p = make_parameter(name, std::move(init));
    list_.push_back(p);
    return p;
  }

  // Registers a parameter created elsewhere (e.g. histogram bins).
  void adopt(const ParamPtr<T>& p) {
    for (const auto& q : list_)
      if (q->name == p->name)
        throw Error(ErrorKind::Config, "duplicate parameter name '" + p->name + "'");
    list_.push_back(p);
  }

  std::vector<ParamPtr<T>>& list() { return list_; }
  const std::vector<ParamPtr<T>>& list() const { return list_; }

  ParamPtr<T> find(const std::string& name) const {
    for (const auto& p : list_)
      if (p->name == name) return p;
    throw Error(ErrorKind::Config, "unknown parameter '" + name + "'");
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : list_) n += p->size();
    return n;
  }

private:
  std::vector<ParamPtr<T>> list_;
};

// He-normal weights (std sqrt(2/fan_in)), zero biases.
template <class T>
Tensor<T> he_normal(const std::vector<int>& shape, int fan_in, Rng& rng) {
  Tensor<T> t(shape);
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal() * std_dev);
  return t;
}

template <class T>
ConvParams<T> make_conv(ParamStore<T>& store, const std::string& name, int cout, int cin,
                        int kh, int kw, Rng& rng) {
  ConvParams<T> p;
  p.w = store.create(name + ".w", he_normal<T>({cout, cin, kh, kw}, cin * kh * kw, rng));
  p.b = store.create(name + ".b", Tensor<T>({cout}));
  return p;
}

template <class T>
BackboneParams<T> make_backbone(ParamStore<T>& store, const std::string& prefix,
                                const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  BackboneParams<T> p;
  p.conv1 = make_conv(store, prefix + ".conv1", cfg.conv1_channels, 3, cfg.conv1_kernel,
                      cfg.conv1_kernel, rng);
  int cin = cfg.conv1_channels;
  for (std::size_t i = 0; i < cfg.fires.size(); ++i) {
    const FireConfig& f = cfg.fires[i];
    const std::string base = prefix + ".fire" + std::to_string(i + 2);
    FireParams<T> fp;
    fp.squeeze = make_conv(store, base + ".squeeze", f.squeeze_channels, cin, 1, 1, rng);
    fp.expand1x1 = make_conv(store, base + ".expand1x1", f.expand1x1_channels,
                             f.squeeze_channels, 1, 1, rng);
    fp.expand3x3 = make_conv(store, base + ".expand3x3", f.expand3x3_channels,
                             f.squeeze_channels, 3, 3, rng);
    p.fires.push_back(fp);
    cin = f.out_channels();
  }
  return p;
}

namespace ops {

// squeeze 1x1 + ReLU, parallel expand 1x1 / 3x3 (pad 1) + ReLU, concat.
template <class T>
Var<T> fire_forward(Tape<T>& tape, const Var<T>& x, const FireParams<T>& p) {
  Var<T> s = relu(tape, conv2d(tape, x, p.squeeze.w->var(), p.squeeze.b->var(), 1, 0));
  Var<T> e1 = relu(tape, conv2d(tape, s, p.expand1x1.w->var(), p.expand1x1.b->var(), 1, 0));
  Var<T> e3 = relu(tape, conv2d(tape, s, p.expand3x3.w->var(), p.expand3x3.b->var(), 1, 1));
  return concat_channels(tape, std::vector<Var<T>>{e1, e3});
}

// conv1 .. fire8 with 2x2/2 pools at the configured positions plus the extra
// final 2x2 pool; total stride 32 in the default configs.
template <class T>
Var<T> backbone_forward(Tape<T>& tape, const Var<T>& image, const BackboneConfig& cfg,
                        const BackboneParams<T>& p) {
  const Tensor<T>& img = image.value();
  require<T>(img.rank() == 3 && img.dim(0) == 3, "backbone expects [3,H,W] input");
  const int min_side = cfg.total_stride();
  if (img.dim(1) < min_side || img.dim(2) < min_side)
    throw Error(ErrorKind::Config,
                "backbone input " + shape_str(img.shape()) + " smaller than minimum footprint " +
                    std::to_string(min_side) + "x" + std::to_string(min_side));
  const int pad = (cfg.conv1_kernel - 1) / 2;
  Var<T> x = relu(tape, conv2d(tape, image, p.conv1.w->var(), p.conv1.b->var(),
                               cfg.conv1_stride, pad));
  if (cfg.pool_after.count(-1)) x = max_pool(tape, x, 2, 2);
  for (std::size_t i = 0; i < p.fires.size(); ++i) {
    x = fire_forward(tape, x, p.fires[i]);
    if (cfg.pool_after.count(static_cast<int>(i))) x = max_pool(tape, x, 2, 2);
  }
  if (cfg.extra_pool) x = max_pool(tape, x, 2, 2);
  return x;
}

}  // namespace ops
}  // namespace awb
