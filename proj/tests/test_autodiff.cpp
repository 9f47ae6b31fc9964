#include <doctest.h>

#include "awb/autodiff.hpp"

using namespace awb;

namespace {

Var<double> var3(std::vector<int> shape, std::vector<double> data) {
  return make_var(Tensor<double>::from(std::move(shape), std::move(data)));
}

Tensor<double> random_tensor(std::vector<int> shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

// Independent direct-summation convolution used as an oracle.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                           const Tensor<double>& b, int stride, int pad) {
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (wd + 2 * pad - kw) / stride + 1;
  Tensor<double> y({cout, oh, ow});
  for (int co = 0; co < cout; ++co)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double acc = b[static_cast<std::size_t>(co)];
        for (int ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
              acc += w.at(co, ci, ky, kx) * x.at(ci, iy, ix);
            }
        y.at(co, oy, ox) = acc;
      }
  return y;
}

}  // namespace

TEST_CASE("conv2d with a 1x1 identity kernel is the identity") {
  Tape<double> tape;
  Rng rng(1);
  Var<double> x = make_var(random_tensor({2, 4, 5}, rng));
  Var<double> w = var3({2, 2, 1, 1}, {1, 0, 0, 1});
  Var<double> b = var3({2}, {0, 0});
  Var<double> y = ops::conv2d(tape, x, w, b, 1, 0);
  REQUIRE(y.value().shape() == x.value().shape());
  for (std::size_t i = 0; i < x.value().size(); ++i) CHECK(y.value()[i] == x.value()[i]);
}

TEST_CASE("conv2d with stride 2 decimates") {
  Tape<double> tape;
  Var<double> x = var3({1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  Var<double> w = var3({1, 1, 1, 1}, {1});
  Var<double> b = var3({1}, {0});
  Var<double> y = ops::conv2d(tape, x, w, b, 2, 0);
  REQUIRE(y.value().shape() == std::vector<int>{1, 1, 2});
  CHECK(y.value()[0] == 1);
  CHECK(y.value()[1] == 3);
}

TEST_CASE("conv2d matches a direct-summation oracle") {
  Rng rng(42);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      Tape<double> tape;
      Var<double> x = make_var(random_tensor({3, 7, 6}, rng));
      Var<double> w = make_var(random_tensor({4, 3, 3, 3}, rng));
      Var<double> b = make_var(random_tensor({4}, rng));
      Var<double> y = ops::conv2d(tape, x, w, b, stride, pad);
      const Tensor<double> ref = conv_oracle(x.value(), w.value(), b.value(), stride, pad);
      REQUIRE(y.value().shape() == ref.shape());
      for (std::size_t i = 0; i < ref.size(); ++i)
        CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("conv2d_same preserves spatial extents for even kernels") {
  Tape<double> tape;
  Rng rng(5);
  Var<double> x = make_var(random_tensor({2, 9, 5}, rng));
  Var<double> w = make_var(random_tensor({3, 2, 6, 6}, rng));
  Var<double> b = make_var(random_tensor({3}, rng));
  Var<double> y = ops::conv2d_same(tape, x, w, b);
  CHECK(y.value().shape() == std::vector<int>{3, 9, 5});
}

TEST_CASE("relu values and subgradient") {
  Tape<double> tape;
  Var<double> x = var3({1, 1, 3}, {-1, 0, 2});
  Var<double> y = ops::relu(tape, x);
  CHECK(y.value()[0] == 0);
  CHECK(y.value()[1] == 0);
  CHECK(y.value()[2] == 2);

  Tape<double> tape2;
  Var<double> x2 = var3({1, 1, 2}, {-1, 2});
  Var<double> s = ops::sum_all(tape2, ops::relu(tape2, x2));
  tape2.backward(s);
  CHECK(x2.grad()[0] == 0);
  CHECK(x2.grad()[1] == 1);
}

TEST_CASE("max_pool picks the window maximum") {
  Tape<double> tape;
  Var<double> x = var3({1, 2, 2}, {1, 2, 3, 4});
  Var<double> y = ops::max_pool(tape, x, 2, 2);
  REQUIRE(y.value().size() == 1);
  CHECK(y.value()[0] == 4);
  Var<double> s = ops::sum_all(tape, y);
  tape.backward(s);
  CHECK(x.grad()[3] == 1);
  CHECK(x.grad()[0] == 0);
}

TEST_CASE("global_avg_pool averages per channel") {
  Tape<double> tape;
  Var<double> x = var3({3, 2, 2}, {1, 1, 1, 1, 2, 2, 2, 2, 0, 0, 0, 0});
  Var<double> y = ops::global_avg_pool(tape, x);
  CHECK(y.value()[0] == 1);
  CHECK(y.value()[1] == 2);
  CHECK(y.value()[2] == 0);
}

TEST_CASE("dense matches the worked example") {
  Tape<double> tape;
  Var<double> x = var3({4}, {1, 2, 3, 4});
  Var<double> w = var3({1, 4}, {1, 1, 1, 1});
  Var<double> b = var3({1}, {0});
  Var<double> y = ops::dense(tape, x, w, b);
  CHECK(y.value()[0] == 10);
}

TEST_CASE("concat then slice is a bit-exact round trip") {
  Tape<double> tape;
  Rng rng(9);
  Var<double> a = make_var(random_tensor({2, 3, 3}, rng));
  Var<double> b = make_var(random_tensor({4, 3, 3}, rng));
  Var<double> cat = ops::concat_channels(tape, std::vector<Var<double>>{a, b});
  REQUIRE(cat.value().shape() == std::vector<int>{6, 3, 3});
  for (std::size_t i = 0; i < a.value().size(); ++i) CHECK(cat.value()[i] == a.value()[i]);
  for (std::size_t i = 0; i < b.value().size(); ++i)
    CHECK(cat.value()[a.value().size() + i] == b.value()[i]);

  Var<double> v = make_var(random_tensor({7}, rng));
  Var<double> left = ops::slice_channels(tape, v, 0, 3);
  Var<double> right = ops::slice_channels(tape, v, 3, 4);
  for (int i = 0; i < 3; ++i) CHECK(left.value()[i] == v.value()[i]);
  for (int i = 0; i < 4; ++i) CHECK(right.value()[i] == v.value()[3 + i]);
}

TEST_CASE("normalize_unit produces a unit vector") {
  Tape<double> tape;
  Var<double> x = var3({3}, {3, 0, 4});
  Var<double> y = ops::normalize_unit(tape, x);
  CHECK(y.value()[0] == doctest::Approx(0.6));
  CHECK(y.value()[2] == doctest::Approx(0.8));
}

TEST_CASE("adam first step moves each parameter by about lr") {
  auto p = make_parameter<double>("p", Tensor<double>::from({3}, {1.0, 2.0, 3.0}));
  (*p->grad)[0] = 0.5;
  (*p->grad)[1] = -2.0;
  (*p->grad)[2] = 1e-3;
  std::vector<ParamPtr<double>> params = {p};
  AdamConfig cfg;
  cfg.learning_rate = 3e-4;
  adam_step(params, cfg);
  // bias correction makes the first update lr * g/(|g| + eps') ~ lr * sign(g)
  CHECK((*p->value)[0] == doctest::Approx(1.0 - 3e-4).epsilon(1e-3));
  CHECK((*p->value)[1] == doctest::Approx(2.0 + 3e-4).epsilon(1e-3));
  CHECK((*p->value)[2] == doctest::Approx(3.0 - 3e-4).epsilon(1e-2));
  // gradients are consumed
  CHECK((*p->grad)[0] == 0);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  auto p = make_parameter<double>("p", Tensor<double>::from({2}, {1.5, -2.5}));
  std::vector<ParamPtr<double>> params = {p};
  AdamConfig cfg;
  adam_step(params, cfg);
  CHECK((*p->value)[0] == 1.5);
  CHECK((*p->value)[1] == -2.5);
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  auto p = make_parameter<double>("s0.conv1.w", Tensor<double>::from({1}, {1.0}));
  (*p->grad)[0] = std::numeric_limits<double>::quiet_NaN();
  std::vector<ParamPtr<double>> params = {p};
  AdamConfig cfg;
  CHECK_THROWS_WITH_AS(adam_step(params, cfg),
                       "non-finite gradient in parameter 's0.conv1.w'", Error);
}

TEST_CASE("grad_check flags a corrupted analytic gradient") {
  Tensor<double> x = Tensor<double>::from({4}, {0.3, -0.7, 1.2, 0.5});
  auto forward = [&]() {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * x[i];
    return acc;
  };
  Tensor<double> analytic({4});
  for (std::size_t i = 0; i < 4; ++i) analytic[i] = 2.0 * x[i];
  Rng rng(3);
  std::vector<GradCheckTarget> good = {{"x", &x, analytic}};
  CHECK(grad_check(forward, good, 1e-5, 4, rng) <= 1e-4);

  analytic[2] *= 2.0;  // corrupt one coordinate
  std::vector<GradCheckTarget> bad = {{"x", &x, analytic}};
  CHECK(grad_check(forward, bad, 1e-5, 4, rng) > 1e-4);
}
