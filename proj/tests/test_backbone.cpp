#include <doctest.h>

#include "awb/backbone.hpp"

using namespace awb;

TEST_CASE("backbone configs have total stride 32") {
  CHECK(BackboneConfig::full().total_stride() == 32);
  CHECK(BackboneConfig::tiny().total_stride() == 32);
  CHECK(BackboneConfig::full().out_channels() == 512);
  CHECK(BackboneConfig::tiny().out_channels() == 64);
}

TEST_CASE("tiny backbone output extents") {
  const BackboneConfig cfg = BackboneConfig::tiny();
  ParamStore<float> store;
  Rng rng(1);
  BackboneParams<float> p = make_backbone(store, "bb", cfg, rng);

  Tape<float> tape;
  Var<float> img = make_var(Tensor<float>({3, 64, 64}, 0.5f));
  Var<float> out = ops::backbone_forward(tape, img, cfg, p);
  CHECK(out.value().shape() == std::vector<int>{64, 2, 2});

  // fully convolutional: doubling the input doubles the output extents
  Tape<float> tape2;
  Var<float> img2 = make_var(Tensor<float>({3, 128, 128}, 0.5f));
  Var<float> out2 = ops::backbone_forward(tape2, img2, cfg, p);
  CHECK(out2.value().shape() == std::vector<int>{64, 4, 4});

  // inputs below the footprint are rejected
  Tape<float> tape3;
  Var<float> small = make_var(Tensor<float>({3, 16, 16}, 0.5f));
  CHECK_THROWS_AS(ops::backbone_forward(tape3, small, cfg, p), Error);
}

TEST_CASE("full backbone maps 512 to 16x16") {
  const BackboneConfig cfg = BackboneConfig::full();
  ParamStore<float> store;
  Rng rng(2);
  BackboneParams<float> p = make_backbone(store, "bb", cfg, rng);
  Tape<float> tape;
  Var<float> img = make_var(Tensor<float>({3, 512, 512}, 0.25f));
  Var<float> out = ops::backbone_forward(tape, img, cfg, p);
  CHECK(out.value().shape() == std::vector<int>{512, 16, 16});
}

TEST_CASE("zero input with zero bias yields zero output") {
  const BackboneConfig cfg = BackboneConfig::tiny();
  ParamStore<float> store;
  Rng rng(3);
  BackboneParams<float> p = make_backbone(store, "bb", cfg, rng);  // biases start at 0
  Tape<float> tape;
  Var<float> img = make_var(Tensor<float>({3, 32, 32}, 0.0f));
  Var<float> out = ops::backbone_forward(tape, img, cfg, p);
  for (std::size_t i = 0; i < out.value().size(); ++i) CHECK(out.value()[i] == 0.0f);
}

TEST_CASE("fire module concatenates expand branches") {
  FireConfig fc{4, 8, 8};
  ParamStore<float> store;
  Rng rng(4);
  FireParams<float> fp;
  fp.squeeze = make_conv(store, "f.squeeze", fc.squeeze_channels, 16, 1, 1, rng);
  fp.expand1x1 = make_conv(store, "f.expand1x1", fc.expand1x1_channels, fc.squeeze_channels, 1, 1, rng);
  fp.expand3x3 = make_conv(store, "f.expand3x3", fc.expand3x3_channels, fc.squeeze_channels, 3, 3, rng);
  Tape<float> tape;
  Var<float> x = make_var(Tensor<float>({16, 6, 6}, 0.1f));
  Var<float> y = ops::fire_forward(tape, x, fp);
  CHECK(y.value().shape() == std::vector<int>{16, 6, 6});
}

TEST_CASE("parameter store rejects duplicates and counts scalars") {
  ParamStore<float> store;
  store.create("a", Tensor<float>({2, 3}));
  store.create("b", Tensor<float>({4}));
  CHECK(store.scalar_count() == 10);
  CHECK_THROWS_AS(store.create("a", Tensor<float>({1})), Error);
  CHECK_THROWS_AS(store.find("missing"), Error);
}
