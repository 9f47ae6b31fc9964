#pragma once

#include "awb/autodiff.hpp"

namespace awb {

struct HistHeadConfig {
  int bins_per_axis = 32;
  std::vector<int> spp_strides = {1, 2, 4, 8};
  int out_channels = 512;

  int n_hist_channels() const {
    int n = 0;
    for (int s : spp_strides) {
      int b = padded_bins();
      n += (b / s) * (b / s);
    }
    return n;
  }

  // bins rounded up to a multiple of the largest stride
  int padded_bins() const {
    int m = 1;
    for (int s : spp_strides) m = std::max(m, s);
    return ((bins_per_axis + m - 1) / m) * m;
  }

  void validate() const {
    if (bins_per_axis < 2) throw Error(ErrorKind::Config, "hist bins_per_axis must be >= 2");
    if (spp_strides.empty()) throw Error(ErrorKind::Config, "spp_strides must be non-empty");
    for (std::size_t i = 0; i < spp_strides.size(); ++i) {
      if (spp_strides[i] < 1) throw Error(ErrorKind::Config, "spp strides must be >= 1");
      if (i && spp_strides[i] < spp_strides[i - 1])
        throw Error(ErrorKind::Config, "spp strides must be sorted ascending");
    }
  }
};

// Learnable triangular bins: centers mu_b and inverse-width omega_b.
template <class T>
struct HistBins {
  ParamPtr<T> centers;
  ParamPtr<T> widths;

  int count() const { return centers->value->dim(0); }
};

// Uniformly spaced centers over [lo, hi], widths 1/spacing (partition of
// unity at initialization).
template <class T>
HistBins<T> make_uniform_bins(const std::string& name_prefix, int bins, T lo, T hi) {
  if (bins < 2) throw Error(ErrorKind::Config, "HistBins needs >= 2 bins");
  const T spacing = (hi - lo) / static_cast<T>(bins - 1);
  Tensor<T> c({bins}), w({bins});
  for (int i = 0; i < bins; ++i) {
    c[static_cast<std::size_t>(i)] = lo + spacing * static_cast<T>(i);
    w[static_cast<std::size_t>(i)] = T(1) / spacing;
  }
  HistBins<T> out;
  out.centers = make_parameter(name_prefix + ".centers", std::move(c));
  out.widths = make_parameter(name_prefix + ".widths", std::move(w));
  return out;
}

// Keeps widths positive after optimizer steps.
template <class T>
void clamp_bin_widths(HistBins<T>& bins, T min_width = T(1e-3)) {
  Tensor<T>& w = *bins.widths->value;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] < min_width) w[i] = min_width;
}

namespace ops {

// Triangular soft vote psi = max(0, 1 - |x - mu| * omega), one vote vector per
// element; output [C,H,W,B]. 0-subgradient at both kinks.
template <class T>
Var<T> vote(Tape<T>& tape, const Var<T>& x, const HistBins<T>& bins) {
  const Tensor<T>& xv = x.value();
  require<T>(xv.rank() == 3, "vote input must be [C,H,W]");
  const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  const int nb = bins.count();
  Var<T> mu = bins.centers->var();
  Var<T> om = bins.widths->var();
  Var<T> out = make_var(Tensor<T>({c, h, w, nb}));
  const std::size_t n = xv.size();
  for (std::size_t i = 0; i < n; ++i) {
    const T xi = xv[i];
    for (int b = 0; b < nb; ++b) {
      const T d = std::fabs(xi - mu.value()[static_cast<std::size_t>(b)]);
      const T psi = T(1) - d * om.value()[static_cast<std::size_t>(b)];
      out.value()[i * nb + b] = psi > T(0) ? psi : T(0);
    }
  }
  tape.record([x, mu, om, out, nb]() {
    const std::size_t n = x.value().size();
    for (std::size_t i = 0; i < n; ++i) {
      const T xi = x.value()[i];
      for (int b = 0; b < nb; ++b) {
        const T psi = out.value()[i * nb + b];
        if (psi <= T(0)) continue;
        const T g = out.grad()[i * nb + b];
        if (g == T(0)) continue;
        const T diff = xi - mu.value()[static_cast<std::size_t>(b)];
        const T sgn = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
        const T omega = om.value()[static_cast<std::size_t>(b)];
        x.grad()[i] += g * (-sgn * omega);
        mu.grad()[static_cast<std::size_t>(b)] += g * (sgn * omega);
        om.grad()[static_cast<std::size_t>(b)] += g * (-std::fabs(diff));
      }
    }
  });
  return out;
}

// 2D chroma histogram: per pixel, uv log-chroma, separable triangular votes on
// both axes, outer product, summed over pixels and divided by the pixel
// count. Output [1,B,B] (u rows, v columns). Pixels are floored at 1e-6
// before the logs.
template <class T>
Var<T> uv_histogram_2d(Tape<T>& tape, const Var<T>& image, const HistBins<T>& bins_u,
                       const HistBins<T>& bins_v) {
  const Tensor<T>& img = image.value();
  require<T>(img.rank() == 3 && img.dim(0) == 3, "uv_histogram_2d expects [3,H,W]");
  const int h = img.dim(1), w = img.dim(2);
  const int bu = bins_u.count(), bv = bins_v.count();
  const T floor_v = T(1e-6);
  const std::size_t npix = static_cast<std::size_t>(h) * w;
  const T inv_n = T(1) / static_cast<T>(npix);

  Var<T> cu = bins_u.centers->var();
  Var<T> wu = bins_u.widths->var();
  Var<T> cv = bins_v.centers->var();
  Var<T> wv = bins_v.widths->var();
  Var<T> out = make_var(Tensor<T>({1, bu, bv}));

  auto tri = [](T x, T mu, T om) {
    const T psi = T(1) - std::fabs(x - mu) * om;
    return psi > T(0) ? psi : T(0);
  };

  std::vector<T> vu(static_cast<std::size_t>(bu)), vv(static_cast<std::size_t>(bv));
  for (std::size_t p = 0; p < npix; ++p) {
    const T r = std::max(img[p], floor_v);
    const T g = std::max(img[npix + p], floor_v);
    const T b = std::max(img[2 * npix + p], floor_v);
    const T u = std::log(g / r);
    const T v = std::log(g / b);
    for (int i = 0; i < bu; ++i)
      vu[static_cast<std::size_t>(i)] = tri(u, cu.value()[static_cast<std::size_t>(i)],
                                            wu.value()[static_cast<std::size_t>(i)]);
    for (int j = 0; j < bv; ++j)
      vv[static_cast<std::size_t>(j)] = tri(v, cv.value()[static_cast<std::size_t>(j)],
                                            wv.value()[static_cast<std::size_t>(j)]);
    for (int i = 0; i < bu; ++i) {
      const T vui = vu[static_cast<std::size_t>(i)];
      if (vui == T(0)) continue;
      T* row = out.value().data() + static_cast<std::size_t>(i) * bv;
      for (int j = 0; j < bv; ++j) row[j] += vui * vv[static_cast<std::size_t>(j)] * inv_n;
    }
  }

  tape.record([image, cu, wu, cv, wv, out, h, w, bu, bv, floor_v, inv_n]() {
    const Tensor<T>& img = image.value();
    const std::size_t npix = static_cast<std::size_t>(h) * w;
    std::vector<T> vu(static_cast<std::size_t>(bu)), vv(static_cast<std::size_t>(bv));
    for (std::size_t p = 0; p < npix; ++p) {
      const T r_raw = img[p], g_raw = img[npix + p], b_raw = img[2 * npix + p];
      const T r = std::max(r_raw, floor_v);
      const T g = std::max(g_raw, floor_v);
      const T b = std::max(b_raw, floor_v);
      const T u = std::log(g / r);
      const T v = std::log(g / b);
      for (int i = 0; i < bu; ++i) {
        const T psi = T(1) - std::fabs(u - cu.value()[static_cast<std::size_t>(i)]) *
                                 wu.value()[static_cast<std::size_t>(i)];
        vu[static_cast<std::size_t>(i)] = psi > T(0) ? psi : T(0);
      }
      for (int j = 0; j < bv; ++j) {
        const T psi = T(1) - std::fabs(v - cv.value()[static_cast<std::size_t>(j)]) *
                                 wv.value()[static_cast<std::size_t>(j)];
        vv[static_cast<std::size_t>(j)] = psi > T(0) ? psi : T(0);
      }
      // gradient w.r.t. the two vote vectors
      T du = T(0), dv = T(0);
      for (int i = 0; i < bu; ++i) {
        T dvu = T(0);
        const T* grow = out.grad().data() + static_cast<std::size_t>(i) * bv;
        for (int j = 0; j < bv; ++j) dvu += grow[j] * vv[static_cast<std::size_t>(j)];
        dvu *= inv_n;
        if (dvu == T(0)) continue;
        if (vu[static_cast<std::size_t>(i)] > T(0)) {
          const T diff = u - cu.value()[static_cast<std::size_t>(i)];
          const T sgn = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
          const T omega = wu.value()[static_cast<std::size_t>(i)];
          du += dvu * (-sgn * omega);
          cu.grad()[static_cast<std::size_t>(i)] += dvu * (sgn * omega);
          wu.grad()[static_cast<std::size_t>(i)] += dvu * (-std::fabs(diff));
        }
      }
      for (int j = 0; j < bv; ++j) {
        T dvv = T(0);
        for (int i = 0; i < bu; ++i)
          dvv += out.grad()[static_cast<std::size_t>(i) * bv + j] * vu[static_cast<std::size_t>(i)];
        dvv *= inv_n;
        if (dvv == T(0)) continue;
        if (vv[static_cast<std::size_t>(j)] > T(0)) {
          const T diff = v - cv.value()[static_cast<std::size_t>(j)];
          const T sgn = diff > T(0) ? T(1) : (diff < T(0) ? T(-1) : T(0));
          const T omega = wv.value()[static_cast<std::size_t>(j)];
          dv += dvv * (-sgn * omega);
          cv.grad()[static_cast<std::size_t>(j)] += dvv * (sgn * omega);
          wv.grad()[static_cast<std::size_t>(j)] += dvv * (-std::fabs(diff));
        }
      }
      // chain through u = log(g/r), v = log(g/b); floored channels get no grad
      if (du != T(0)) {
        if (r_raw > floor_v) image.grad()[p] += du * (-T(1) / r);
        if (g_raw > floor_v) image.grad()[npix + p] += du * (T(1) / g);
      }
      if (dv != T(0)) {
        if (b_raw > floor_v) image.grad()[2 * npix + p] += dv * (-T(1) / b);
        if (g_raw > floor_v) image.grad()[npix + p] += dv * (T(1) / g);
      }
    }
  });
  return out;
}

// Multi-scale average pooling of the [1,B,B] histogram; flattened scales
// concatenated (stride 1 first). The histogram is zero-padded up to a
// multiple of the largest stride when needed.
template <class T>
Var<T> spp(Tape<T>& tape, const Var<T>& hist, const std::vector<int>& strides) {
  const Tensor<T>& x = hist.value();
  require<T>(x.rank() == 3 && x.dim(0) == 1 && x.dim(1) == x.dim(2),
             "spp expects a square [1,B,B] histogram");
  require<T>(!strides.empty(), "spp needs at least one stride");
  const int b = x.dim(1);
  int maxs = 1;
  for (int s : strides) {
    require<T>(s >= 1, "spp strides must be >= 1");
    maxs = std::max(maxs, s);
  }
  const int bp = ((b + maxs - 1) / maxs) * maxs;  // padded extent

  int total = 0;
  for (int s : strides) total += (bp / s) * (bp / s);
  Var<T> out = make_var(Tensor<T>({total}));

  auto cell = [&](int y, int xx) -> T {
    return (y < b && xx < b) ? x.data()[static_cast<std::size_t>(y) * b + xx] : T(0);
  };
  std::size_t off = 0;
  for (int s : strides) {
    const int n = bp / s;
    const T inv = T(1) / static_cast<T>(s * s);
    for (int oy = 0; oy < n; ++oy) {
      for (int ox = 0; ox < n; ++ox) {
        T acc = T(0);
        for (int ky = 0; ky < s; ++ky)
          for (int kx = 0; kx < s; ++kx) acc += cell(oy * s + ky, ox * s + kx);
        out.value()[off++] = acc * inv;
      }
    }
  }

  auto strides_copy = std::make_shared<std::vector<int>>(strides);
  tape.record([hist, out, strides_copy, b, bp]() {
    std::size_t off = 0;
    for (int s : *strides_copy) {
      const int n = bp / s;
      const T inv = T(1) / static_cast<T>(s * s);
      for (int oy = 0; oy < n; ++oy) {
        for (int ox = 0; ox < n; ++ox) {
          const T g = out.grad()[off++] * inv;
          if (g == T(0)) continue;
          for (int ky = 0; ky < s; ++ky) {
            const int y = oy * s + ky;
            if (y >= b) continue;
            for (int kx = 0; kx < s; ++kx) {
              const int xx = ox * s + kx;
              if (xx >= b) continue;
              hist.grad()[static_cast<std::size_t>(y) * b + xx] += g;
            }
          }
        }
      }
    }
  });
  return out;
}

// Dense N_hist -> out_channels followed by ReLU.
template <class T>
Var<T> hist_head(Tape<T>& tape, const Var<T>& pooled, const Var<T>& w, const Var<T>& b) {
  return relu(tape, dense(tape, pooled, w, b));
}

}  // namespace ops
}  // namespace awb
