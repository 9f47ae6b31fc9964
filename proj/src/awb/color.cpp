#include "awb/color.hpp"

#include <algorithm>
#include <cmath>

namespace awb {

namespace {
constexpr double kPi = 3.14159265358979323846;

double rad2deg(double r) { return r * 180.0 / kPi; }

double angle_deg(double ar, double ag, double ab, double br, double bg, double bb) {
  const double na = std::sqrt(ar * ar + ag * ag + ab * ab);
  const double nb = std::sqrt(br * br + bg * bg + bb * bb);
  if (!(na > 0.0) || !(nb > 0.0))
    throw Error(ErrorKind::Numeric, "angular error of a zero vector");
  double u = (ar * br + ag * bg + ab * bb) / (na * nb);
  u = std::clamp(u, -1.0, 1.0);
  return rad2deg(std::acos(u));
}

// Quartiles via linear interpolation at p*(n-1); midpoint median for even n.
double quantile(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  if (lo + 1 >= n) return sorted[n - 1];
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}
}  // namespace

double IlluminantVector::norm() const { return std::sqrt(r * r + g * g + b * b); }

IlluminantVector IlluminantVector::normalized() const {
  const double n = norm();
  if (!(n > 0.0)) throw Error(ErrorKind::Numeric, "cannot normalize zero illuminant");
  return {r / n, g / n, b / n};
}

std::pair<double, double> rgb_to_uv(const IlluminantVector& c) {
  if (!(c.r > 0.0)) throw Error(ErrorKind::Data, "rgb_to_uv: non-positive r channel");
  if (!(c.g > 0.0)) throw Error(ErrorKind::Data, "rgb_to_uv: non-positive g channel");
  if (!(c.b > 0.0)) throw Error(ErrorKind::Data, "rgb_to_uv: non-positive b channel");
  return {std::log(c.g / c.r), std::log(c.g / c.b)};
}

IlluminantVector uv_to_rgb(double u, double v) {
  if (!std::isfinite(u) || !std::isfinite(v))
    throw Error(ErrorKind::Numeric, "uv_to_rgb: non-finite input");
  return IlluminantVector{std::exp(-u), 1.0, std::exp(-v)}.normalized();
}

double angular_error(const IlluminantVector& a, const IlluminantVector& b) {
  return angle_deg(a.r, a.g, a.b, b.r, b.g, b.b);
}

double two_illum_error(const TwoIlluminantLabel& pred, const TwoIlluminantLabel& gt) {
  return 0.5 * angular_error(pred.left, gt.left) + 0.5 * angular_error(pred.right, gt.right);
}

double min_squared_sum_error(const TwoIlluminantLabel& pred, const TwoIlluminantLabel& gt) {
  const double ll = angular_error(pred.left, gt.left);
  const double rr = angular_error(pred.right, gt.right);
  const double lr = angular_error(pred.left, gt.right);
  const double rl = angular_error(pred.right, gt.left);
  return std::min(ll * ll + rr * rr, lr * lr + rl * rl);
}

double reproduction_error(const IlluminantVector& pred, const IlluminantVector& gt) {
  if (!(pred.r > 0.0 && pred.g > 0.0 && pred.b > 0.0))
    throw Error(ErrorKind::Data, "reproduction_error: prediction has a non-positive channel");
  return angle_deg(gt.r / pred.r, gt.g / pred.g, gt.b / pred.b, 1.0, 1.0, 1.0);
}

ErrorStats summarize(const std::vector<double>& errors) {
  if (errors.empty()) throw Error(ErrorKind::Data, "summarize: empty error list");
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  ErrorStats s;
  double sum = 0.0, sumsq = 0.0;
  for (double e : sorted) {
    sum += e;
    sumsq += e * e;
  }
  s.mean = sum / static_cast<double>(n);
  s.mean_squared = sumsq / static_cast<double>(n);
  s.median = quantile(sorted, 0.5);
  s.trimean = (quantile(sorted, 0.25) + 2.0 * s.median + quantile(sorted, 0.75)) / 4.0;

  const std::size_t k = (n + 3) / 4;  // ceil(n/4) largest
  double wsum = 0.0;
  for (std::size_t i = n - k; i < n; ++i) wsum += sorted[i];
  s.worst25_mean = wsum / static_cast<double>(k);
  return s;
}

Tensor<float> color_correct(const Tensor<float>& image, const IlluminantVector& illum) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw Error(ErrorKind::Config, "color_correct expects [3,H,W], got " + shape_str(image.shape()));
  if (!(illum.r > 0.0 && illum.g > 0.0 && illum.b > 0.0))
    throw Error(ErrorKind::Data, "color_correct: illuminant has a non-positive channel");
  const IlluminantVector n = illum.normalized();
  const double ratio[3] = {n.g / n.r, 1.0, n.g / n.b};
  Tensor<float> out(image.shape());
  const int h = image.dim(1), w = image.dim(2);
  for (int ch = 0; ch < 3; ++ch) {
    const float* src = image.data() + static_cast<std::size_t>(ch) * h * w;
    float* dst = out.data() + static_cast<std::size_t>(ch) * h * w;
    const float f = static_cast<float>(ratio[ch]);
    for (int i = 0; i < h * w; ++i) dst[i] = src[i] * f;
  }
  return out;
}

IlluminantVector gray_world(const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw Error(ErrorKind::Config, "gray_world expects [3,H,W], got " + shape_str(image.shape()));
  const int h = image.dim(1), w = image.dim(2);
  double mean[3] = {0.0, 0.0, 0.0};
  for (int ch = 0; ch < 3; ++ch) {
    const float* src = image.data() + static_cast<std::size_t>(ch) * h * w;
    double acc = 0.0;
    for (int i = 0; i < h * w; ++i) acc += src[i];
    mean[ch] = acc / static_cast<double>(h * w);
  }
  IlluminantVector m{mean[0], mean[1], mean[2]};
  if (!(m.norm() > 0.0)) throw Error(ErrorKind::Data, "gray_world: all-zero image");
  return m.normalized();
}

}  // namespace awb
