#pragma once

#include <map>
#include <string>

#include "awb/autodiff.hpp"
#include "awb/backbone.hpp"

namespace awb {

struct ExifRecord {
  double aperture = 0.0;       // f-number
  double exposure_time = 0.0;  // seconds
  double iso = 0.0;
  int orientation = 0;         // quarter turns, 0..3

  void validate() const;
};

struct ExifFeature {
  std::array<double, 4> values{};
};

// [log2(aperture), log2(exposure_time), log2(iso/100), orientation/3]
ExifFeature normalize_exif(const ExifRecord& rec);

// Schema: "image_id,aperture,exposure_time,iso,orientation"; exposure accepts
// "1/N" or decimal seconds.
std::map<std::string, ExifRecord> parse_exif_csv(const std::string& path);

void write_exif_csv(const std::string& path, const std::map<std::string, ExifRecord>& records);

template <class T>
struct ExifMlpParams {
  ConvParams<T> l1;  // dense 4 -> 4, stored as [4,4] weights
  ConvParams<T> l2;  // dense 4 -> out
};

template <class T>
ExifMlpParams<T> make_exif_mlp(ParamStore<T>& store, const std::string& prefix, int out_channels,
                               Rng& rng) {
  ExifMlpParams<T> p;
  p.l1.w = store.create(prefix + ".l1.w", he_normal<T>({4, 4}, 4, rng));
  p.l1.b = store.create(prefix + ".l1.b", Tensor<T>({4}));
  p.l2.w = store.create(prefix + ".l2.w", he_normal<T>({out_channels, 4}, 4, rng));
  p.l2.b = store.create(prefix + ".l2.b", Tensor<T>({out_channels}));
  return p;
}

namespace ops {

// [Conv-4-4, ReLU, Conv-4-512, ReLU] over a 1x1 spatial map == two dense
// layers with ReLU.
template <class T>
Var<T> exif_mlp(Tape<T>& tape, const Var<T>& feat, const ExifMlpParams<T>& p) {
  Var<T> h = relu(tape, dense(tape, feat, p.l1.w->var(), p.l1.b->var()));
  return relu(tape, dense(tape, h, p.l2.w->var(), p.l2.b->var()));
}

}  // namespace ops

template <class T>
Tensor<T> exif_feature_tensor(const ExifRecord& rec) {
  const ExifFeature f = normalize_exif(rec);
  Tensor<T> t({4});
  for (int i = 0; i < 4; ++i) t[static_cast<std::size_t>(i)] = static_cast<T>(f.values[static_cast<std::size_t>(i)]);
  return t;
}

}  // namespace awb
