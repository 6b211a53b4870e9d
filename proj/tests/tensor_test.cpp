#include <gtest/gtest.h>

#include <cmath>

#include "ginv/adam.hpp"
#include "ginv/rng.hpp"
#include "ginv/tensor.hpp"

using namespace ginv;

namespace {

class TensorTest : public ::testing::Test {
 protected:
  void SetUp() override { tape<float>().clear(); }
  void TearDown() override { tape<float>().clear(); }
};

TEST_F(TensorTest, CreateBasics) {
  auto t = Tensor::create({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(t.value(), (std::vector<float>{1, 2, 3, 4}));
  EXPECT_THROW(Tensor::create({3}, {0, 0}), ShapeError);
  EXPECT_THROW(Tensor::create({2, 0}, {}), ShapeError);
  auto tile = Tensor::zeros({1, 5, 8, 8});
  EXPECT_EQ(tile.size(), 320u);
}

TEST_F(TensorTest, GradZeroInitialized) {
  auto t = Tensor::create({3}, {1, 2, 3}, true);
  ASSERT_TRUE(t.tracked());
  EXPECT_EQ(t.grad(), (std::vector<float>{0, 0, 0}));
}

TEST_F(TensorTest, ElementwiseExamples) {
  auto a = abs_(Tensor::create({2}, {-1, 2}));
  EXPECT_EQ(a.value(), (std::vector<float>{1, 2}));
  EXPECT_FLOAT_EQ(log_(Tensor::create({1}, {1.0f})).value()[0], 0.0f);
  auto d = abs_(sub(Tensor::create({1}, {0.9f}), Tensor::create({1}, {0.4f})));
  EXPECT_NEAR(d.value()[0], 0.5f, 1e-6);
  EXPECT_THROW(log_(Tensor::create({1}, {0.0f})), NumericError);
  EXPECT_THROW(log_(Tensor::create({1}, {-1.0f})), NumericError);
  EXPECT_THROW(add(Tensor::create({2}, {1, 2}), Tensor::create({3}, {1, 2, 3})), ShapeError);
}

TEST_F(TensorTest, Reductions) {
  EXPECT_FLOAT_EQ(mean(Tensor::create({3}, {1, 2, 3})).item(), 2.0f);
  EXPECT_FLOAT_EQ(sum(Tensor::create({4}, {1, 1, 1, 1})).item(), 4.0f);

  // tie: gradient routed to the lowest flat index
  auto x = Tensor::create({3}, {0.1f, 0.7f, 0.7f}, true);
  auto m = max_(x);
  EXPECT_FLOAT_EQ(m.item(), 0.7f);
  tape<float>().backward(m);
  EXPECT_EQ(x.grad(), (std::vector<float>{0, 1, 0}));
}

TEST_F(TensorTest, BackwardExamples) {
  {
    auto x = Tensor::create({1}, {3.0f}, true);
    auto loss = mean(square(x));
    tape<float>().backward(loss);
    EXPECT_FLOAT_EQ(x.grad()[0], 6.0f);
    tape<float>().clear();
  }
  {
    auto x = Tensor::create({5}, std::vector<float>(5, 2.0f), true);
    auto loss = sum(x);
    tape<float>().backward(loss);
    EXPECT_EQ(x.grad(), std::vector<float>(5, 1.0f));
    tape<float>().clear();
  }
  {
    // constant loss leaves every gradient zero
    auto x = Tensor::create({2}, {1.0f, 2.0f}, true);
    auto c = mean(scale(x, 0.0f));
    tape<float>().backward(c);
    EXPECT_EQ(x.grad(), (std::vector<float>{0, 0}));
  }
}

TEST_F(TensorTest, BackwardOfSumEqualsSumOfBackwards) {
  // gradient of l1 + l2 equals the sum of the gradients of l1 and l2
  // computed on fresh graphs
  auto x = Tensor::create({3}, {0.5f, -0.25f, 0.75f}, true);

  tape<float>().clear();
  auto joint = add(mean(square(x)), sum(abs_(x)));
  tape<float>().backward(joint);
  auto ga = x.grad();

  tape<float>().clear();
  x.zero_grad();
  tape<float>().backward(mean(square(x)));
  auto g1 = x.grad();

  tape<float>().clear();
  x.zero_grad();
  tape<float>().backward(sum(abs_(x)));
  auto g2 = x.grad();
  tape<float>().clear();

  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(ga[i], g1[i] + g2[i], 1e-6);
}

TEST_F(TensorTest, Conv2dHandExample) {
  auto input = Tensor::create({1, 1, 4, 4}, std::vector<float>(16, 1.0f));
  auto v = Tensor::create({1, 1, 2, 2}, std::vector<float>(4, 1.0f));
  auto g = Tensor::create({1}, {2.0f});  // ||v|| = 2, so w = v
  auto b = Tensor::zeros({1});
  auto out = conv2d(input, v, g, b, 2, 0);
  EXPECT_EQ(out.shape(), (std::vector<std::size_t>{1, 1, 2, 2}));
  for (float o : out.value()) EXPECT_FLOAT_EQ(o, 4.0f);
}

TEST_F(TensorTest, Conv2dResolutionHalving) {
  // k=4, stride=2, padding=1 halves 512 to 256
  auto input = Tensor::zeros({1, 1, 512, 512});
  auto v = Tensor::create({1, 1, 4, 4}, std::vector<float>(16, 0.5f));
  auto g = Tensor::create({1}, {1.0f});
  auto b = Tensor::zeros({1});
  auto out = conv2d(input, v, g, b, 2, 1);
  EXPECT_EQ(out.dim(2), 256u);
  EXPECT_EQ(out.dim(3), 256u);
}

TEST_F(TensorTest, Conv2dZeroInputGivesBias) {
  auto input = Tensor::zeros({1, 2, 6, 6});
  auto v = Tensor::create({3, 2, 4, 4}, std::vector<float>(96, 0.1f));
  auto g = Tensor::create({3}, {1, 1, 1});
  auto b = Tensor::create({3}, {0.5f, -0.25f, 2.0f});
  auto out = conv2d(input, v, g, b, 2, 1);
  const std::size_t hw = out.dim(2) * out.dim(3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < hw; ++i)
      EXPECT_FLOAT_EQ(out.value()[c * hw + i], b.value()[c]);
}

TEST_F(TensorTest, Conv2dErrors) {
  auto input = Tensor::zeros({1, 2, 4, 4});
  auto v = Tensor::create({1, 3, 2, 2}, std::vector<float>(12, 1.0f));
  auto g = Tensor::create({1}, {1.0f});
  auto b = Tensor::zeros({1});
  EXPECT_THROW(conv2d(input, v, g, b, 2, 0), ShapeError);  // channel mismatch
  auto v0 = Tensor::zeros({1, 2, 2, 2});
  EXPECT_THROW(conv2d(input, v0, g, b, 2, 0), NumericError);  // zero norm
}

TEST_F(TensorTest, ConvTransposeHandExample) {
  auto input = Tensor::create({1, 1, 1, 1}, {1.0f});
  auto v = Tensor::create({1, 1, 2, 2}, std::vector<float>(4, 1.0f));
  auto g = Tensor::create({1}, {2.0f});  // w = v = ones
  auto b = Tensor::zeros({1});
  auto out = conv_transpose2d(input, v, g, b, 2, 0);
  EXPECT_EQ(out.shape(), (std::vector<std::size_t>{1, 1, 2, 2}));
  for (float o : out.value()) EXPECT_FLOAT_EQ(o, 1.0f);
}

TEST_F(TensorTest, ConvTransposeResolutionDoubling) {
  auto input = Tensor::zeros({1, 1, 8, 8});
  auto v = Tensor::create({1, 1, 4, 4}, std::vector<float>(16, 0.3f));
  auto g = Tensor::create({1}, {1.0f});
  auto b = Tensor::zeros({1});
  auto out = conv_transpose2d(input, v, g, b, 2, 1);
  EXPECT_EQ(out.dim(2), 16u);
  EXPECT_EQ(out.dim(3), 16u);
}

TEST_F(TensorTest, ConvThenTransposeRestoresResolution) {
  for (std::size_t H : {8u, 16u, 64u}) {
    auto input = Tensor::zeros({1, 1, H, H});
    auto v = Tensor::create({1, 1, 4, 4}, std::vector<float>(16, 0.2f));
    auto g = Tensor::create({1}, {1.0f});
    auto b = Tensor::zeros({1});
    auto down = conv2d(input, v, g, b, 2, 1);
    EXPECT_EQ(down.dim(2), H / 2);
    auto up = conv_transpose2d(down, v, g, b, 2, 1);
    EXPECT_EQ(up.dim(2), H);
  }
}

TEST_F(TensorTest, WeightNormProperties) {
  Rng rng(7);
  std::vector<float> vv(2 * 3 * 4 * 4);
  for (auto& x : vv) x = static_cast<float>(rng.normal(0.0, 1.0));
  auto v = Tensor::create({2, 3, 4, 4}, vv);
  auto g = Tensor::create({2}, {0.7f, 1.9f});
  auto b = Tensor::zeros({2});
  auto input = Tensor::create({1, 3, 6, 6}, [&] {
    std::vector<float> d(108);
    for (auto& x : d) x = static_cast<float>(rng.uniform() * 2 - 1);
    return d;
  }());

  // ||w per out channel|| == g
  std::vector<float> w, norms;
  detail::effective_weight(v.value(), g.value(), 2, w, norms);
  for (std::size_t co = 0; co < 2; ++co) {
    float s = 0;
    for (std::size_t i = 0; i < 48; ++i) s += w[co * 48 + i] * w[co * 48 + i];
    EXPECT_NEAR(std::sqrt(s), g.value()[co], 1e-5);
  }

  // scaling v by a positive constant leaves the output unchanged
  auto out1 = conv2d(input, v, g, b, 2, 1);
  for (auto& x : vv) x *= 3.25f;
  auto v2 = Tensor::create({2, 3, 4, 4}, vv);
  auto out2 = conv2d(input, v2, g, b, 2, 1);
  for (std::size_t i = 0; i < out1.size(); ++i)
    EXPECT_NEAR(out1.value()[i], out2.value()[i], 1e-5);
}

TEST_F(TensorTest, PreluExamples) {
  auto x = Tensor::create({2}, {-1.0f, 2.0f});
  auto a = Tensor::create({1}, {0.2f});
  auto out = prelu(x, a);
  EXPECT_FLOAT_EQ(out.value()[0], -0.2f);
  EXPECT_FLOAT_EQ(out.value()[1], 2.0f);
  EXPECT_FLOAT_EQ(prelu(Tensor::create({1}, {0.0f}), a).value()[0], 0.0f);
  auto one = Tensor::create({1}, {1.0f});
  auto id = prelu(Tensor::create({3}, {-5, 0, 5}), one);
  EXPECT_EQ(id.value(), (std::vector<float>{-5, 0, 5}));
}

TEST_F(TensorTest, Activations) {
  EXPECT_FLOAT_EQ(tanh_(Tensor::create({1}, {0.0f})).value()[0], 0.0f);
  EXPECT_FLOAT_EQ(sigmoid_(Tensor::create({1}, {0.0f})).value()[0], 0.5f);
  auto sat = tanh_(Tensor::create({1}, {1000.0f}));
  EXPECT_TRUE(std::isfinite(sat.value()[0]));
  EXPECT_NEAR(sat.value()[0], 1.0f, 1e-6);
  auto sneg = sigmoid_(Tensor::create({1}, {-1000.0f}));
  EXPECT_TRUE(std::isfinite(sneg.value()[0]));
}

TEST_F(TensorTest, ConcatAndSlice) {
  auto a = Tensor::create({1, 2, 4, 4}, std::vector<float>(32, 1.0f));
  auto b = Tensor::create({1, 3, 4, 4}, std::vector<float>(48, 2.0f));
  auto cat = concat_channels(a, b);
  EXPECT_EQ(cat.shape(), (std::vector<std::size_t>{1, 5, 4, 4}));
  auto back = slice_channels(cat, 0, 2);
  EXPECT_EQ(back.value(), a.value());
  auto mismatched = Tensor::zeros({1, 3, 5, 4});
  EXPECT_THROW(concat_channels(a, mismatched), ShapeError);
}

TEST_F(TensorTest, ResizeBilinear) {
  // identity when sizes match
  auto x = Tensor::create({1, 1, 2, 2}, {0.1f, 0.7f, -0.3f, 0.9f});
  auto same = resize_bilinear(x, 2, 2);
  EXPECT_EQ(same.value(), x.value());

  // constant image stays constant at any size
  auto c = Tensor::create({1, 1, 3, 3}, std::vector<float>(9, 0.42f));
  auto up = resize_bilinear(c, 7, 5);
  for (float vv : up.value()) EXPECT_NEAR(vv, 0.42f, 1e-6);

  // 2x2 [[0,1],[0,1]] -> 1x3 gives [0, 0.5, 1]
  auto img = Tensor::create({1, 1, 2, 2}, {0, 1, 0, 1});
  auto out = resize_bilinear(img, 1, 3);
  EXPECT_NEAR(out.value()[0], 0.0f, 1e-6);
  EXPECT_NEAR(out.value()[1], 0.5f, 1e-6);
  EXPECT_NEAR(out.value()[2], 1.0f, 1e-6);

  EXPECT_THROW(resize_bilinear(x, 0, 3), ShapeError);
}

TEST_F(TensorTest, NonScalarBackwardThrows) {
  auto x = Tensor::create({2}, {1, 2}, true);
  auto y = square(x);
  EXPECT_THROW(tape<float>().backward(y), ShapeError);
}

TEST_F(TensorTest, DeterministicReduction) {
  Rng rng(11);
  std::vector<float> d(1000);
  for (auto& x : d) x = static_cast<float>(rng.uniform() * 2 - 1);
  auto t1 = Tensor::create({1000}, d);
  auto t2 = Tensor::create({1000}, d);
  EXPECT_EQ(sum(t1).item(), sum(t2).item());
  EXPECT_EQ(mean(t1).item(), mean(t2).item());
}

TEST_F(TensorTest, AdamHandStep) {
  auto w = Tensor::create({1}, {1.0f}, true);
  w.grad()[0] = 2.0f;
  std::vector<Tensor> params{w};
  std::vector<AdamState> states{AdamState(1)};
  AdamHyper h;
  h.alpha = 0.1f;
  adam_step(params, states, h);
  EXPECT_NEAR(w.value()[0], 0.9f, 1e-5);
  EXPECT_EQ(states[0].step_count, 1u);
  EXPECT_FLOAT_EQ(w.grad()[0], 0.0f);  // grads zeroed after the step
}

TEST_F(TensorTest, AdamZeroGradNoOp) {
  auto w = Tensor::create({2}, {1.0f, -2.0f}, true);
  std::vector<Tensor> params{w};
  std::vector<AdamState> states{AdamState(2)};
  AdamHyper h;
  adam_step(params, states, h);
  EXPECT_EQ(w.value(), (std::vector<float>{1.0f, -2.0f}));
  EXPECT_EQ(states[0].step_count, 1u);
}

TEST_F(TensorTest, AdamDefaults) {
  AdamHyper h;
  EXPECT_FLOAT_EQ(h.alpha, 2e-4f);
  EXPECT_FLOAT_EQ(h.beta1, 0.5f);
  EXPECT_FLOAT_EQ(h.beta2, 0.999f);
  EXPECT_FLOAT_EQ(h.epsilon, 1e-8f);
}

TEST_F(TensorTest, AdamMissingGradThrows) {
  auto w = Tensor::create({1}, {1.0f});  // not tracked
  std::vector<Tensor> params{w};
  std::vector<AdamState> states{AdamState(1)};
  AdamHyper h;
  EXPECT_THROW(adam_step(params, states, h), ShapeError);
}

}  // namespace
