#pragma once

#include <array>
#include <vector>

#include "awb/tensor.hpp"

namespace awb {

// Linear sensor RGB response of a light source. Only the direction matters.
struct IlluminantVector {
  double r = 0.0, g = 0.0, b = 0.0;

  double norm() const;
  IlluminantVector normalized() const;
  double operator[](int i) const { return i == 0 ? r : (i == 1 ? g : b); }
};

struct TwoIlluminantLabel {
  IlluminantVector left;
  IlluminantVector right;
};

struct ErrorStats {
  double mean = 0.0;
  double median = 0.0;
  double trimean = 0.0;
  double worst25_mean = 0.0;
  double mean_squared = 0.0;
};

// uv log-chroma per u = log(g/r), v = log(g/b). All channels must be > 0.
std::pair<double, double> rgb_to_uv(const IlluminantVector& c);

// Inverse with g fixed to 1, then unit-normalized.
IlluminantVector uv_to_rgb(double u, double v);

// Recovery angular error in degrees; symmetric and scale invariant.
double angular_error(const IlluminantVector& a, const IlluminantVector& b);

// Two-illuminant error: half left error plus half right error, fixed
// assignment. Degrees.
double two_illum_error(const TwoIlluminantLabel& pred, const TwoIlluminantLabel& gt);

// Min over the two left/right assignments of the sum of squared errors.
// Degrees squared.
double min_squared_sum_error(const TwoIlluminantLabel& pred, const TwoIlluminantLabel& gt);

// Angle between the componentwise gt/pred quotient and the achromatic vector.
double reproduction_error(const IlluminantVector& pred, const IlluminantVector& gt);

// mean / midpoint median / (Q1+2Q2+Q3)/4 trimean / mean of the ceil(n/4)
// largest values; mean_squared always filled.
ErrorStats summarize(const std::vector<double>& errors);

// Divide by the normalized illuminant, rescale by its green component: a pixel
// equal to the illuminant maps to gray at its original green level.
Tensor<float> color_correct(const Tensor<float>& image, const IlluminantVector& illum);

// Gray World estimate: normalized per-channel mean.
IlluminantVector gray_world(const Tensor<float>& image);

}  // namespace awb
