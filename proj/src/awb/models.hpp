#pragma once

#include <optional>

#include "awb/backbone.hpp"
#include "awb/color.hpp"
#include "awb/exif.hpp"
#include "awb/hist.hpp"

namespace awb {

enum class ModelKind { A, B, C, ATwo, CTwo };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::A: return "A";
    case ModelKind::B: return "B";
    case ModelKind::C: return "C";
    case ModelKind::ATwo: return "A2";
    case ModelKind::CTwo: return "C2";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "A") return ModelKind::A;
  if (s == "B") return ModelKind::B;
  if (s == "C") return ModelKind::C;
  if (s == "A2") return ModelKind::ATwo;
  if (s == "C2") return ModelKind::CTwo;
  throw Error(ErrorKind::Config, "unknown model kind '" + s + "' (expected A|B|C|A2|C2)");
}

inline bool is_two_illuminant(ModelKind k) { return k == ModelKind::ATwo || k == ModelKind::CTwo; }
inline bool is_cascade(ModelKind k) { return k == ModelKind::C || k == ModelKind::CTwo; }
inline bool has_side_branches(ModelKind k) { return k != ModelKind::B; }

struct ModelConfig {
  ModelKind kind = ModelKind::B;
  std::string backbone_scale = "tiny";  // tiny | full
  HistHeadConfig hist;
  std::uint64_t seed = 1;

  BackboneConfig backbone() const {
    if (backbone_scale == "tiny") return BackboneConfig::tiny();
    if (backbone_scale == "full") return BackboneConfig::full();
    throw Error(ErrorKind::Config, "unknown backbone scale '" + backbone_scale + "'");
  }
};

template <class T>
struct StageParams {
  BackboneParams<T> backbone;
  bool has_hist = false;
  HistBins<T> bins_u, bins_v;
  ConvParams<T> hist_head;  // dense [512, N_hist]
  bool has_exif = false;
  ExifMlpParams<T> exif;
  ConvParams<T> head_conv;  // 6x6 same-padded, -> 64
  ConvParams<T> head_out;   // 1x1, -> 3 or 6
};

template <class T>
struct ModelGraph {
  ModelConfig config;
  BackboneConfig backbone_cfg;
  ParamStore<T> store;
  std::vector<StageParams<T>> stages;

  int stage_count() const { return static_cast<int>(stages.size()); }
};

namespace detail {

template <class T>
StageParams<T> make_stage(ParamStore<T>& store, const std::string& prefix, bool side_branches,
                          const BackboneConfig& bb, const HistHeadConfig& hist, int out_channels,
                          Rng& rng) {
  StageParams<T> s;
  s.backbone = make_backbone(store, prefix + ".backbone", bb, rng);
  int head_in = bb.out_channels();
  if (side_branches) {
    s.has_hist = true;
    const int b = hist.bins_per_axis;
    s.bins_u = make_uniform_bins<T>(prefix + ".hist.u", b, T(-2.5), T(2.5));
    store.adopt(s.bins_u.centers);
    store.adopt(s.bins_u.widths);
    s.bins_v = make_uniform_bins<T>(prefix + ".hist.v", b, T(-2.5), T(2.5));
    store.adopt(s.bins_v.centers);
    store.adopt(s.bins_v.widths);
    const int nh = hist.n_hist_channels();
    s.hist_head.w = store.create(prefix + ".hist.head.w", he_normal<T>({hist.out_channels, nh}, nh, rng));
    s.hist_head.b = store.create(prefix + ".hist.head.b", Tensor<T>({hist.out_channels}));
    s.has_exif = true;
    s.exif = make_exif_mlp(store, prefix + ".exif", hist.out_channels, rng);
    head_in += 2 * hist.out_channels;
  }
  s.head_conv = make_conv(store, prefix + ".head.conv", 64, head_in, 6, 6, rng);
  s.head_out = make_conv(store, prefix + ".head.out", out_channels, 64, 1, 1, rng);
  // positive output bias: the head starts near achromatic; a zero init risks
  // channels dying under the output ReLU (axis predictions, zero gradient)
  for (std::size_t i = 0; i < s.head_out.b->value->size(); ++i) (*s.head_out.b->value)[i] = T(1);
  return s;
}

}  // namespace detail

template <class T>
ModelGraph<T> build_model(const ModelConfig& cfg) {
  cfg.hist.validate();
  ModelGraph<T> g;
  g.config = cfg;
  g.backbone_cfg = cfg.backbone();
  Rng rng(cfg.seed);
  const ModelKind k = cfg.kind;
  const int n_stages = is_cascade(k) ? 3 : 1;
  for (int i = 0; i < n_stages; ++i) {
    const bool side = has_side_branches(k) && i == 0;
    const bool last = i == n_stages - 1;
    const int out = (is_two_illuminant(k) && last) ? 6 : 3;
    g.stages.push_back(detail::make_stage(g.store, "s" + std::to_string(i), side, g.backbone_cfg,
                                          cfg.hist, out, rng));
  }
  return g;
}

// Forward results as tape variables; values stay differentiable for loss
// construction. stage_cumulative holds the normalized cumulative estimate per
// cascade stage (single-illuminant path).
template <class T>
struct ForwardVars {
  std::vector<Var<T>> stage_cumulative;
  Var<T> final_illum;  // unit 3-vector (single-illum kinds)
  Var<T> left, right;  // unit 3-vectors (two-illum kinds)
  bool two = false;
};

// Inference-facing result in double precision.
struct Prediction {
  IlluminantVector illuminant;
  std::optional<IlluminantVector> second_illuminant;
  std::vector<IlluminantVector> per_stage;          // cumulative estimates
  std::optional<Tensor<float>> confidence_map;      // reserved, not produced
};

namespace detail {

// Shared regression head: Conv-6x6 same -> ReLU -> Conv-1x1 -> ReLU -> GAP.
template <class T>
Var<T> stage_head(Tape<T>& tape, const Var<T>& feat, const StageParams<T>& s) {
  Var<T> h = ops::relu(tape, ops::conv2d_same(tape, feat, s.head_conv.w->var(), s.head_conv.b->var()));
  Var<T> o = ops::relu(tape, ops::conv2d(tape, h, s.head_out.w->var(), s.head_out.b->var(), 1, 0));
  return ops::global_avg_pool(tape, o);
}

// Epsilon-stabilized unit normalization; all-zero head output falls back to
// the achromatic direction instead of NaN.
template <class T>
Var<T> stabilized_normalize(Tape<T>& tape, const Var<T>& raw) {
  return ops::normalize_unit(tape, ops::add_scalar(tape, raw, T(1e-6)));
}

template <class T>
Var<T> stage_feature(Tape<T>& tape, const Var<T>& image, const StageParams<T>& s,
                     const BackboneConfig& bb_cfg, const HistHeadConfig& hist_cfg,
                     const Tensor<T>* exif_feat) {
  Var<T> bb = ops::backbone_forward(tape, image, bb_cfg, s.backbone);
  if (!s.has_hist) return bb;
  const int h = bb.value().dim(1), w = bb.value().dim(2);
  Var<T> histo = ops::uv_histogram_2d(tape, image, s.bins_u, s.bins_v);
  Var<T> pooled = ops::spp(tape, histo, hist_cfg.spp_strides);
  Var<T> hist_vec = ops::hist_head(tape, pooled, s.hist_head.w->var(), s.hist_head.b->var());
  Var<T> hist_map = ops::broadcast_spatial(tape, hist_vec, h, w);
  if (!exif_feat)
    throw Error(ErrorKind::Data, "model requires exif metadata but none was provided");
  Var<T> exif_in = make_var(Tensor<T>(*exif_feat));
  Var<T> exif_vec = ops::exif_mlp(tape, exif_in, s.exif);
  Var<T> exif_map = ops::broadcast_spatial(tape, exif_vec, h, w);
  return ops::concat_channels(tape, std::vector<Var<T>>{bb, hist_map, exif_map});
}

}  // namespace detail

// Full model forward. exif_feat must be non-null for kinds with an Exif
// branch (A, C and the two-illuminant variants).
template <class T>
ForwardVars<T> model_forward(Tape<T>& tape, ModelGraph<T>& g, const Var<T>& image,
                             const Tensor<T>* exif_feat) {
  ForwardVars<T> out;
  const ModelKind kind = g.config.kind;
  Var<T> cur_image = image;
  Var<T> cumulative;  // normalized cumulative estimate
  const int n = g.stage_count();
  for (int i = 0; i < n; ++i) {
    StageParams<T>& s = g.stages[static_cast<std::size_t>(i)];
    const bool last = i == n - 1;
    Var<T> feat = detail::stage_feature(tape, cur_image, s, g.backbone_cfg, g.config.hist,
                                        s.has_hist ? exif_feat : nullptr);
    Var<T> head = detail::stage_head(tape, feat, s);

    if (is_two_illuminant(kind) && last) {
      Var<T> l = detail::stabilized_normalize(tape, ops::slice_channels(tape, head, 0, 3));
      Var<T> r = detail::stabilized_normalize(tape, ops::slice_channels(tape, head, 3, 3));
      if (i > 0) {
        l = ops::normalize_unit(tape, ops::mul_elem(tape, cumulative, l));
        r = ops::normalize_unit(tape, ops::mul_elem(tape, cumulative, r));
      }
      out.left = l;
      out.right = r;
      out.two = true;
      return out;
    }

    Var<T> stage_est = detail::stabilized_normalize(tape, head);
    cumulative = (i == 0) ? stage_est
                          : ops::normalize_unit(tape, ops::mul_elem(tape, cumulative, stage_est));
    out.stage_cumulative.push_back(cumulative);
    if (!last) cur_image = ops::color_correct_graph(tape, cur_image, stage_est);
  }
  out.final_illum = cumulative;
  return out;
}

// Training loss in radians. Single-illuminant kinds supervise every cascade
// stage's cumulative estimate with equal weight; two-illuminant kinds use the
// half-left + half-right form with fixed assignment.
template <class T>
Var<T> model_loss(Tape<T>& tape, const ForwardVars<T>& fwd, const Tensor<T>& gt_left,
                  const Tensor<T>& gt_right) {
  if (fwd.two) {
    std::vector<Var<T>> terms = {ops::angular_loss(tape, fwd.left, gt_left),
                                 ops::angular_loss(tape, fwd.right, gt_right)};
    return ops::weighted_sum(tape, terms, std::vector<T>{T(0.5), T(0.5)});
  }
  std::vector<Var<T>> terms;
  std::vector<T> weights;
  const T w = T(1) / static_cast<T>(fwd.stage_cumulative.size());
  for (const auto& c : fwd.stage_cumulative) {
    terms.push_back(ops::angular_loss(tape, c, gt_left));
    weights.push_back(w);
  }
  return ops::weighted_sum(tape, terms, weights);
}

template <class T>
Tensor<T> illum_tensor(const IlluminantVector& v) {
  Tensor<T> t({3});
  t[0] = static_cast<T>(v.r);
  t[1] = static_cast<T>(v.g);
  t[2] = static_cast<T>(v.b);
  return t;
}

template <class T>
IlluminantVector to_illum(const Var<T>& v) {
  return IlluminantVector{static_cast<double>(v.value()[0]), static_cast<double>(v.value()[1]),
                          static_cast<double>(v.value()[2])};
}

// Inference: forward without loss, extracting plain-value predictions.
template <class T>
Prediction predict(ModelGraph<T>& g, const Tensor<T>& image, const Tensor<T>* exif_feat) {
  Tape<T> tape;
  Var<T> img = make_var(Tensor<T>(image));
  ForwardVars<T> fwd = model_forward(tape, g, img, exif_feat);
  Prediction p;
  if (fwd.two) {
    p.illuminant = to_illum(fwd.left);
    p.second_illuminant = to_illum(fwd.right);
  } else {
    p.illuminant = to_illum(fwd.final_illum);
    for (const auto& c : fwd.stage_cumulative) p.per_stage.push_back(to_illum(c));
  }
  return p;
}

// Width clamp after each optimizer step (see HistBins).
template <class T>
void post_step_clamp(ModelGraph<T>& g) {
  for (auto& s : g.stages) {
    if (!s.has_hist) continue;
    clamp_bin_widths(s.bins_u);
    clamp_bin_widths(s.bins_v);
  }
}

}  // namespace awb
