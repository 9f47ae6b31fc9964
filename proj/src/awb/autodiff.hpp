#pragma once

#include <array>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "awb/tensor.hpp"

namespace awb {

// A differentiable value on the tape: shared value + gradient buffers.
template <class T>
struct Var {
  std::shared_ptr<Tensor<T>> v;
  std::shared_ptr<Tensor<T>> g;

  // Handle semantics: a const Var still exposes mutable shared buffers.
  Tensor<T>& value() const { return *v; }
  Tensor<T>& grad() const { return *g; }
};

template <class T>
Var<T> make_var(Tensor<T> value) {
  Var<T> out;
  out.v = std::make_shared<Tensor<T>>(std::move(value));
  out.g = std::make_shared<Tensor<T>>(out.v->shape());
  return out;
}

// Trainable tensor with Adam state. Gradients accumulate across tape
// backward passes until the optimizer consumes them.
template <class T>
struct Parameter {
  std::string name;
  std::shared_ptr<Tensor<T>> value;
  std::shared_ptr<Tensor<T>> grad;
  std::shared_ptr<Tensor<T>> adam_m;
  std::shared_ptr<Tensor<T>> adam_v;

  Var<T> var() const { return Var<T>{value, grad}; }
  std::size_t size() const { return value->size(); }
};

template <class T>
using ParamPtr = std::shared_ptr<Parameter<T>>;

template <class T>
ParamPtr<T> make_parameter(std::string name, Tensor<T> init) {
  auto p = std::make_shared<Parameter<T>>();
  p->name = std::move(name);
  p->value = std::make_shared<Tensor<T>>(std::move(init));
  p->grad = std::make_shared<Tensor<T>>(p->value->shape());
  p->adam_m = std::make_shared<Tensor<T>>(p->value->shape());
  p->adam_v = std::make_shared<Tensor<T>>(p->value->shape());
  return p;
}

// Fixed-topology reverse-mode tape. Ops append a backward closure in forward
// order; backward() replays them in reverse. All model graphs here are static,
// so creation order is a valid topological order.
template <class T>
class Tape {
public:
  void record(std::function<void()> back) { back_.push_back(std::move(back)); }

  // Seeds the (scalar) loss gradient with 1 and propagates.
  void backward(Var<T>& loss) {
    if (loss.v->size() != 1)
      throw Error(ErrorKind::Numeric, "backward requires a scalar loss, got " + shape_str(loss.v->shape()));
    (*loss.g)[0] += T(1);
    for (auto it = back_.rbegin(); it != back_.rend(); ++it) (*it)();
  }

  void clear() { back_.clear(); }
  std::size_t node_count() const { return back_.size(); }

private:
  std::vector<std::function<void()>> back_;
};

namespace ops {

template <class T>
inline void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorKind::Config, msg);
}

// --- convolution ------------------------------------------------------------

// General form with per-side padding; the public conv2d below is symmetric.
template <class T>
Var<T> conv2d_padded(Tape<T>& tape, const Var<T>& input, const Var<T>& w, const Var<T>& b,
                     int stride, int pt, int pb, int pl, int pr) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& wt = w.value();
  require<T>(x.rank() == 3, "conv2d input must be [C,H,W], got " + shape_str(x.shape()));
  require<T>(wt.rank() == 4, "conv2d weights must be [C_out,C_in,kh,kw], got " + shape_str(wt.shape()));
  if (x.dim(0) != wt.dim(1))
    throw Error(ErrorKind::Config, "conv2d channel mismatch: input " + shape_str(x.shape()) +
                                       " vs weights " + shape_str(wt.shape()));
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = wt.dim(0), kh = wt.dim(2), kw = wt.dim(3);
  require<T>(b.value().rank() == 1 && b.value().dim(0) == cout,
             "conv2d bias must be [C_out], got " + shape_str(b.value().shape()));
  require<T>(stride >= 1 && kh >= 1 && kw >= 1, "conv2d stride/kernel must be >= 1");
  const int ph = h + pt + pb, pw = wd + pl + pr;
  require<T>(ph >= kh && pw >= kw, "conv2d input (incl. padding) smaller than kernel");
  const int oh = (ph - kh) / stride + 1;
  const int ow = (pw - kw) / stride + 1;

  Var<T> out = make_var(Tensor<T>({cout, oh, ow}));
  Tensor<T>& y = out.value();
  for (int co = 0; co < cout; ++co) {
    const T bias = b.value()[static_cast<std::size_t>(co)];
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        T acc = bias;
        const int iy0 = oy * stride - pt;
        const int ix0 = ox * stride - pl;
        for (int ci = 0; ci < cin; ++ci) {
          for (int ky = 0; ky < kh; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < kw; ++kx) {
              const int ix = ix0 + kx;
              if (ix < 0 || ix >= wd) continue;
              acc += wt.at(co, ci, ky, kx) * x.at(ci, iy, ix);
            }
          }
        }
        y.at(co, oy, ox) = acc;
      }
    }
  }

  tape.record([input, w, b, out, stride, pt, pl]() {
    const Tensor<T>& x = input.value();
    const Tensor<T>& wt = w.value();
    const Tensor<T>& gy = out.grad();
    Tensor<T>& gx = input.grad();
    Tensor<T>& gw = w.grad();
    Tensor<T>& gb = b.grad();
    const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int cout = wt.dim(0), kh = wt.dim(2), kw = wt.dim(3);
    const int oh = gy.dim(1), ow = gy.dim(2);
    for (int co = 0; co < cout; ++co) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const T g = gy.at(co, oy, ox);
          if (g == T(0)) continue;
          gb[static_cast<std::size_t>(co)] += g;
          const int iy0 = oy * stride - pt;
          const int ix0 = ox * stride - pl;
          for (int ci = 0; ci < cin; ++ci) {
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= wd) continue;
                gw.at(co, ci, ky, kx) += g * x.at(ci, iy, ix);
                gx.at(ci, iy, ix) += g * wt.at(co, ci, ky, kx);
              }
            }
          }
        }
      }
    }
  });
  return out;
}

template <class T>
Var<T> conv2d(Tape<T>& tape, const Var<T>& input, const Var<T>& w, const Var<T>& b,
              int stride, int padding) {
  return conv2d_padded(tape, input, w, b, stride, padding, padding, padding, padding);
}

// Stride-1 convolution that preserves the spatial extents (asymmetric padding
// for even kernels: floor((k-1)/2) before, floor(k/2) after).
template <class T>
Var<T> conv2d_same(Tape<T>& tape, const Var<T>& input, const Var<T>& w, const Var<T>& b) {
  const int kh = w.value().dim(2), kw = w.value().dim(3);
  return conv2d_padded(tape, input, w, b, 1, (kh - 1) / 2, kh / 2, (kw - 1) / 2, kw / 2);
}

// --- pointwise and pooling --------------------------------------------------

template <class T>
Var<T> relu(Tape<T>& tape, const Var<T>& input) {
  Var<T> out = make_var(zeros_like(input.value()));
  const std::size_t n = input.value().size();
  for (std::size_t i = 0; i < n; ++i) {
    T x = input.value()[i];
    out.value()[i] = x > T(0) ? x : T(0);
  }
  tape.record([input, out]() {
    const std::size_t n = input.value().size();
    for (std::size_t i = 0; i < n; ++i)
      if (input.value()[i] > T(0)) input.grad()[i] += out.grad()[i];
  });
  return out;
}

template <class T>
Var<T> max_pool(Tape<T>& tape, const Var<T>& input, int k, int stride) {
  const Tensor<T>& x = input.value();
  require<T>(x.rank() == 3, "max_pool input must be [C,H,W]");
  require<T>(k >= 1 && stride >= 1, "max_pool k/stride must be >= 1");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  require<T>(h >= k && w >= k, "max_pool window larger than input");
  const int oh = (h - k) / stride + 1;
  const int ow = (w - k) / stride + 1;
  Var<T> out = make_var(Tensor<T>({c, oh, ow}));
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.value().size());
  std::size_t oi = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox, ++oi) {
        T best = x.at(ch, oy * stride, ox * stride);
        std::size_t best_idx =
            (static_cast<std::size_t>(ch) * h + oy * stride) * w + ox * stride;
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            const int iy = oy * stride + ky, ix = ox * stride + kx;
            T v = x.at(ch, iy, ix);
            if (v > best) {  // first occurrence wins ties
              best = v;
              best_idx = (static_cast<std::size_t>(ch) * h + iy) * w + ix;
            }
          }
        }
        out.value()[oi] = best;
        (*argmax)[oi] = best_idx;
      }
    }
  }
  tape.record([input, out, argmax]() {
    for (std::size_t i = 0; i < out.value().size(); ++i)
      input.grad()[(*argmax)[i]] += out.grad()[i];
  });
  return out;
}

template <class T>
Var<T> global_avg_pool(Tape<T>& tape, const Var<T>& input) {
  const Tensor<T>& x = input.value();
  require<T>(x.rank() == 3, "global_avg_pool input must be [C,H,W]");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const T inv = T(1) / static_cast<T>(h * w);
  Var<T> out = make_var(Tensor<T>({c}));
  for (int ch = 0; ch < c; ++ch) {
    T acc = T(0);
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) acc += x.at(ch, y, xx);
    out.value()[static_cast<std::size_t>(ch)] = acc * inv;
  }
  tape.record([input, out, inv]() {
    const int c = input.value().dim(0), h = input.value().dim(1), w = input.value().dim(2);
    for (int ch = 0; ch < c; ++ch) {
      const T g = out.grad()[static_cast<std::size_t>(ch)] * inv;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) input.grad().at(ch, y, xx) += g;
    }
  });
  return out;
}

template <class T>
Var<T> broadcast_spatial(Tape<T>& tape, const Var<T>& input, int h, int w) {
  const Tensor<T>& x = input.value();
  require<T>(x.rank() == 1, "broadcast_spatial input must be [C]");
  require<T>(h >= 1 && w >= 1, "broadcast_spatial extents must be >= 1");
  const int c = x.dim(0);
  Var<T> out = make_var(Tensor<T>({c, h, w}));
  for (int ch = 0; ch < c; ++ch) {
    const T v = x[static_cast<std::size_t>(ch)];
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) out.value().at(ch, y, xx) = v;
  }
  tape.record([input, out, h, w]() {
    const int c = input.value().dim(0);
    for (int ch = 0; ch < c; ++ch) {
      T acc = T(0);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) acc += out.grad().at(ch, y, xx);
      input.grad()[static_cast<std::size_t>(ch)] += acc;
    }
  });
  return out;
}

template <class T>
Var<T> concat_channels(Tape<T>& tape, const std::vector<Var<T>>& parts) {
  require<T>(!parts.empty(), "concat_channels needs at least one part");
  const int h = parts[0].value().dim(1), w = parts[0].value().dim(2);
  int ctotal = 0;
  for (const auto& p : parts) {
    require<T>(p.value().rank() == 3, "concat_channels parts must be [C,H,W]");
    if (p.value().dim(1) != h || p.value().dim(2) != w) {
      std::string msg = "concat_channels spatial mismatch:";
      for (const auto& q : parts) msg += " " + shape_str(q.value().shape());
      throw Error(ErrorKind::Config, msg);
    }
    ctotal += p.value().dim(0);
  }
  Var<T> out = make_var(Tensor<T>({ctotal, h, w}));
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.value().data() + off);
    off += p.value().size();
  }
  tape.record([parts, out]() {
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t n = p.value().size();
      for (std::size_t i = 0; i < n; ++i) p.grad()[i] += out.grad()[off + i];
      off += n;
    }
  });
  return out;
}

template <class T>
Var<T> dense(Tape<T>& tape, const Var<T>& input, const Var<T>& w, const Var<T>& b) {
  const Tensor<T>& x = input.value();
  const Tensor<T>& wt = w.value();
  require<T>(x.rank() == 1, "dense input must be [D_in], got " + shape_str(x.shape()));
  require<T>(wt.rank() == 2, "dense weights must be [D_out,D_in], got " + shape_str(wt.shape()));
  if (wt.dim(1) != x.dim(0))
    throw Error(ErrorKind::Config, "dense shape mismatch: input " + shape_str(x.shape()) +
                                       " vs weights " + shape_str(wt.shape()));
  const int din = x.dim(0), dout = wt.dim(0);
  require<T>(b.value().rank() == 1 && b.value().dim(0) == dout,
             "dense bias must be [D_out], got " + shape_str(b.value().shape()));
  Var<T> out = make_var(Tensor<T>({dout}));
  for (int o = 0; o < dout; ++o) {
    T acc = b.value()[static_cast<std::size_t>(o)];
    const T* row = wt.data() + static_cast<std::size_t>(o) * din;
    for (int i = 0; i < din; ++i) acc += row[i] * x[static_cast<std::size_t>(i)];
    out.value()[static_cast<std::size_t>(o)] = acc;
  }
  tape.record([input, w, b, out]() {
    const int din = input.value().dim(0), dout = w.value().dim(0);
    for (int o = 0; o < dout; ++o) {
      const T g = out.grad()[static_cast<std::size_t>(o)];
      if (g == T(0)) continue;
      b.grad()[static_cast<std::size_t>(o)] += g;
      const T* row = w.value().data() + static_cast<std::size_t>(o) * din;
      T* grow = w.grad().data() + static_cast<std::size_t>(o) * din;
      for (int i = 0; i < din; ++i) {
        grow[i] += g * input.value()[static_cast<std::size_t>(i)];
        input.grad()[static_cast<std::size_t>(i)] += g * row[i];
      }
    }
  });
  return out;
}

// --- small vector algebra used by heads and losses --------------------------

template <class T>
Var<T> add_scalar(Tape<T>& tape, const Var<T>& input, T c) {
  Var<T> out = make_var(zeros_like(input.value()));
  for (std::size_t i = 0; i < input.value().size(); ++i) out.value()[i] = input.value()[i] + c;
  tape.record([input, out]() {
    for (std::size_t i = 0; i < input.value().size(); ++i) input.grad()[i] += out.grad()[i];
  });
  return out;
}

template <class T>
Var<T> mul_elem(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  require<T>(a.value().same_shape(b.value()), "mul_elem shape mismatch: " +
                                                  shape_str(a.value().shape()) + " vs " +
                                                  shape_str(b.value().shape()));
  Var<T> out = make_var(zeros_like(a.value()));
  for (std::size_t i = 0; i < a.value().size(); ++i)
    out.value()[i] = a.value()[i] * b.value()[i];
  tape.record([a, b, out]() {
    for (std::size_t i = 0; i < a.value().size(); ++i) {
      a.grad()[i] += out.grad()[i] * b.value()[i];
      b.grad()[i] += out.grad()[i] * a.value()[i];
    }
  });
  return out;
}

// y = x / ||x||. The caller guarantees ||x|| > 0 (heads add an epsilon first).
template <class T>
Var<T> normalize_unit(Tape<T>& tape, const Var<T>& input) {
  const std::size_t n = input.value().size();
  T nsq = T(0);
  for (std::size_t i = 0; i < n; ++i) nsq += input.value()[i] * input.value()[i];
  const T norm = std::sqrt(nsq);
  if (!(norm > T(0)))
    throw Error(ErrorKind::Numeric, "normalize_unit on zero vector");
  Var<T> out = make_var(zeros_like(input.value()));
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = input.value()[i] / norm;
  tape.record([input, out, norm]() {
    const std::size_t n = input.value().size();
    T dot = T(0);
    for (std::size_t i = 0; i < n; ++i) dot += out.grad()[i] * out.value()[i];
    for (std::size_t i = 0; i < n; ++i)
      input.grad()[i] += (out.grad()[i] - out.value()[i] * dot) / norm;
  });
  return out;
}

template <class T>
Var<T> slice_channels(Tape<T>& tape, const Var<T>& input, int from, int count) {
  const Tensor<T>& x = input.value();
  require<T>(x.rank() == 1, "slice_channels input must be rank 1");
  require<T>(from >= 0 && from + count <= x.dim(0), "slice_channels out of range");
  Var<T> out = make_var(Tensor<T>({count}));
  for (int i = 0; i < count; ++i)
    out.value()[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(from + i)];
  tape.record([input, out, from, count]() {
    for (int i = 0; i < count; ++i)
      input.grad()[static_cast<std::size_t>(from + i)] += out.grad()[static_cast<std::size_t>(i)];
  });
  return out;
}

// Recovery angular error in radians between a predicted vector and a fixed
// ground truth. The derivative factor is zeroed within 1e-12 of |cos| = 1 so
// the 0-degree singularity never produces non-finite gradients in training.
template <class T>
Var<T> angular_loss(Tape<T>& tape, const Var<T>& pred, const Tensor<T>& gt) {
  require<T>(pred.value().size() == gt.size() && gt.size() == 3,
             "angular_loss expects 3-vectors");
  T pp = T(0), gg = T(0), pg = T(0);
  for (int i = 0; i < 3; ++i) {
    pp += pred.value()[i] * pred.value()[i];
    gg += gt[i] * gt[i];
    pg += pred.value()[i] * gt[i];
  }
  if (!(pp > T(0)) || !(gg > T(0)))
    throw Error(ErrorKind::Numeric, "angular_loss on zero vector");
  const T pn = std::sqrt(pp), gn = std::sqrt(gg);
  T u = pg / (pn * gn);
  if (u > T(1)) u = T(1);
  if (u < T(-1)) u = T(-1);
  Var<T> out = make_var(Tensor<T>({1}));
  out.value()[0] = std::acos(u);
  auto gt_copy = std::make_shared<Tensor<T>>(gt);
  tape.record([pred, out, gt_copy, u, pn, gn]() {
    const T one_minus = T(1) - u * u;
    if (one_minus <= T(1e-12)) return;  // flat subgradient at the clamp
    const T dacos = -T(1) / std::sqrt(one_minus);
    const T g = out.grad()[0] * dacos;
    for (int i = 0; i < 3; ++i) {
      const T du = (*gt_copy)[i] / (pn * gn) - u * pred.value()[i] / (pn * pn);
      pred.grad()[i] += g * du;
    }
  });
  return out;
}

template <class T>
Var<T> weighted_sum(Tape<T>& tape, const std::vector<Var<T>>& terms,
                    const std::vector<T>& weights) {
  require<T>(!terms.empty() && terms.size() == weights.size(), "weighted_sum arity mismatch");
  Var<T> out = make_var(Tensor<T>({1}));
  T acc = T(0);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require<T>(terms[i].value().size() == 1, "weighted_sum terms must be scalars");
    acc += weights[i] * terms[i].value()[0];
  }
  out.value()[0] = acc;
  tape.record([terms, weights, out]() {
    for (std::size_t i = 0; i < terms.size(); ++i)
      terms[i].grad()[0] += weights[i] * out.grad()[0];
  });
  return out;
}

template <class T>
Var<T> sum_all(Tape<T>& tape, const Var<T>& input) {
  Var<T> out = make_var(Tensor<T>({1}));
  T acc = T(0);
  for (std::size_t i = 0; i < input.value().size(); ++i) acc += input.value()[i];
  out.value()[0] = acc;
  tape.record([input, out]() {
    for (std::size_t i = 0; i < input.value().size(); ++i) input.grad()[i] += out.grad()[0];
  });
  return out;
}

// White balance by a (possibly unnormalized) illuminant estimate: divide each
// channel by the illuminant and rescale by its green component, so the ratio
// applied to channel ch is illum_g / illum_ch. Channels are floored at 1e-4
// inside the graph so a ReLU-zeroed component cannot blow up the cascade.
template <class T>
Var<T> color_correct_graph(Tape<T>& tape, const Var<T>& image, const Var<T>& illum) {
  const Tensor<T>& img = image.value();
  require<T>(img.rank() == 3 && img.dim(0) == 3, "color_correct expects [3,H,W] image");
  require<T>(illum.value().size() == 3, "color_correct expects a 3-vector illuminant");
  const T floor_v = T(1e-4);
  T c[3];
  bool floored[3];
  for (int i = 0; i < 3; ++i) {
    c[i] = illum.value()[static_cast<std::size_t>(i)];
    floored[i] = c[i] < floor_v;
    if (floored[i]) c[i] = floor_v;
  }
  const int h = img.dim(1), w = img.dim(2);
  Var<T> out = make_var(Tensor<T>({3, h, w}));
  for (int ch = 0; ch < 3; ++ch) {
    const T ratio = c[1] / c[ch];
    const T* src = img.data() + static_cast<std::size_t>(ch) * h * w;
    T* dst = out.value().data() + static_cast<std::size_t>(ch) * h * w;
    for (int i = 0; i < h * w; ++i) dst[i] = src[i] * ratio;
  }
  auto st = std::make_shared<std::array<T, 3>>(std::array<T, 3>{c[0], c[1], c[2]});
  auto fl = std::make_shared<std::array<bool, 3>>(std::array<bool, 3>{floored[0], floored[1], floored[2]});
  tape.record([image, illum, out, st, fl]() {
    const Tensor<T>& img = image.value();
    const int h = img.dim(1), w = img.dim(2);
    const T* c = st->data();
    T dc[3] = {T(0), T(0), T(0)};
    for (int ch = 0; ch < 3; ++ch) {
      const T ratio = c[1] / c[ch];
      const T* src = img.data() + static_cast<std::size_t>(ch) * h * w;
      const T* gy = out.grad().data() + static_cast<std::size_t>(ch) * h * w;
      T* gx = image.grad().data() + static_cast<std::size_t>(ch) * h * w;
      T dot = T(0);
      for (int i = 0; i < h * w; ++i) {
        gx[i] += gy[i] * ratio;
        dot += gy[i] * src[i];
      }
      // d out_ch / d c_g = img/c_ch ; d out_ch / d c_ch = -img * c_g / c_ch^2
      // (green ratio is identically 1: no illuminant gradient from ch == 1)
      if (ch != 1) {
        dc[1] += dot / c[ch];
        dc[ch] -= dot * c[1] / (c[ch] * c[ch]);
      }
    }
    for (int i = 0; i < 3; ++i)
      if (!(*fl)[static_cast<std::size_t>(i)]) illum.grad()[static_cast<std::size_t>(i)] += dc[i];
  });
  return out;
}

}  // namespace ops

// --- Adam -------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;

  void validate() const {
    if (!(learning_rate > 0) || !(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1) ||
        !(epsilon > 0) || step_count < 0)
      throw Error(ErrorKind::Config, "invalid Adam configuration");
  }
};

// Standard bias-corrected Adam. Gradients are zeroed after the update.
template <class T>
void adam_step(std::vector<ParamPtr<T>>& params, AdamConfig& cfg) {
  cfg.validate();
  for (auto& p : params)
    for (std::size_t i = 0; i < p->grad->size(); ++i)
      if (!std::isfinite(static_cast<double>((*p->grad)[i])))
        throw Error(ErrorKind::Numeric, "non-finite gradient in parameter '" + p->name + "'");
  cfg.step_count += 1;
  const double t = static_cast<double>(cfg.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : params) {
    Tensor<T>& v = *p->value;
    Tensor<T>& g = *p->grad;
    Tensor<T>& m = *p->adam_m;
    Tensor<T>& vv = *p->adam_v;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(vv[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      vv[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      v[i] = static_cast<T>(static_cast<double>(v[i]) -
                            cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
      g[i] = T(0);
    }
  }
}

template <class T>
void zero_grads(std::vector<ParamPtr<T>>& params) {
  for (auto& p : params) p->grad->fill(T(0));
}

// --- finite-difference gradient check ---------------------------------------

struct GradCheckTarget {
  std::string name;
  Tensor<double>* value;     // perturbed in place
  Tensor<double> analytic;   // frozen copy of the analytic gradient
};

// Central differences against frozen analytic gradients, sampling up to
// samples_per_tensor coordinates of each target. Relative error denominator is
// max(|analytic|, |numeric|, 1e-8).
//
// A coordinate that disagrees at the base step is re-measured with smaller
// steps: crossing a ReLU/max/vote kink inside the stencil inflates the
// difference quotient, but the crossing disappears as the step shrinks,
// whereas a wrong analytic gradient stays wrong at every step size.
inline double grad_check(const std::function<double()>& forward,
                         std::vector<GradCheckTarget>& targets, double eps,
                         int samples_per_tensor, Rng& rng, std::string* worst_detail = nullptr) {
  double worst = 0.0;
  for (auto& t : targets) {
    const std::size_t n = t.value->size();
    std::vector<std::size_t> coords;
    if (static_cast<int>(n) <= samples_per_tensor) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (int i = 0; i < samples_per_tensor; ++i) coords.push_back(rng.index(n));
    }
    for (std::size_t ci : coords) {
      const double analytic = t.analytic[ci];
      const double orig = (*t.value)[ci];
      double rel = std::numeric_limits<double>::infinity();
      double numeric = 0.0;
      for (double h : {eps, eps / 8.0, eps / 64.0}) {
        (*t.value)[ci] = orig + h;
        const double fp = forward();
        (*t.value)[ci] = orig - h;
        const double fm = forward();
        (*t.value)[ci] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
          throw Error(ErrorKind::Numeric, "non-finite loss during grad check of '" + t.name + "'");
        const double num_h = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::fabs(analytic), std::fabs(num_h), 1e-8});
        // absolute agreement below stencil noise counts as exact
        const double diff = std::fabs(analytic - num_h);
        const double rel_h = diff <= 1e-10 ? 0.0 : diff / denom;
        if (rel_h < rel) {
          rel = rel_h;
          numeric = num_h;
        }
        if (rel <= 1e-4) break;
      }
      if (rel > worst) {
        worst = rel;
        if (worst_detail) {
          std::ostringstream os;
          os << t.name << "[" << ci << "] analytic=" << analytic << " numeric=" << numeric;
          *worst_detail = os.str();
        }
      }
    }
  }
  return worst;
}

}  // namespace awb
