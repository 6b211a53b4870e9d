#include <gtest/gtest.h>

#include "ginv/gradcheck.hpp"
#include "ginv/rng.hpp"

using namespace ginv;

namespace {

using DTensor = TensorT<double>;

DTensor rand_dtensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return DTensor::create(std::move(shape), std::move(v), true);
}

TEST(GradCheck, MeanSquare) {
  Rng rng(3);
  auto x = rand_dtensor({6}, rng);
  const double err = grad_check([](DTensor& t) { return mean(square(t)); }, x, 1e-3);
  EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, ConstantFunction) {
  Rng rng(4);
  auto x = rand_dtensor({4}, rng);
  const double err =
      grad_check([](DTensor& t) { return mean(scale(t, 0.0)); }, x, 1e-3);
  EXPECT_EQ(err, 0.0);
}

TEST(GradCheck, Conv2dComposite) {
  Rng rng(5);
  auto v = rand_dtensor({3, 2, 4, 4}, rng);
  auto g = rand_dtensor({3}, rng, 0.5, 1.5);
  auto b = rand_dtensor({3}, rng);
  auto x = rand_dtensor({1, 2, 6, 6}, rng);
  const double err = grad_check(
      [&](DTensor& t) { return mean(square(conv2d(t, v, g, b, 2, 1))); }, x, 1e-3);
  EXPECT_LT(err, 1e-3);
}

TEST(GradCheck, ConvTransposeComposite) {
  Rng rng(6);
  auto v = rand_dtensor({2, 3, 4, 4}, rng);
  auto g = rand_dtensor({2}, rng, 0.5, 1.5);
  auto b = rand_dtensor({2}, rng);
  auto x = rand_dtensor({1, 3, 3, 3}, rng);
  const double err = grad_check(
      [&](DTensor& t) { return mean(square(conv_transpose2d(t, v, g, b, 2, 1))); }, x, 1e-3);
  EXPECT_LT(err, 1e-3);
}

TEST(GradCheck, WeightNormParameters) {
  Rng rng(7);
  auto v = rand_dtensor({2, 2, 3, 3}, rng);
  auto g = rand_dtensor({2}, rng, 0.5, 1.5);
  auto b = rand_dtensor({2}, rng);
  auto x = rand_dtensor({1, 2, 5, 5}, rng);
  EXPECT_LT(grad_check(
                [&](DTensor& t) { return mean(square(conv2d(x, t, g, b, 1, 0))); }, v, 1e-3),
            1e-3);
  EXPECT_LT(grad_check(
                [&](DTensor& t) { return mean(square(conv2d(x, v, t, b, 1, 0))); }, g, 1e-3),
            1e-3);
}

TEST(GradCheck, ElementwiseOpsInUnitRange) {
  Rng rng(8);
  auto x = rand_dtensor({10}, rng);
  EXPECT_LT(grad_check([](DTensor& t) { return sum(tanh_(t)); }, x, 1e-3), 1e-3);
  EXPECT_LT(grad_check([](DTensor& t) { return sum(square(sigmoid_(t))); }, x, 1e-3), 1e-3);
  auto slope = DTensor::create({1}, {0.2}, true);
  EXPECT_LT(grad_check([&](DTensor& t) { return sum(square(prelu(t, slope))); }, x, 1e-3),
            1e-3);
  EXPECT_LT(grad_check([](DTensor& t) { return sum(square(resize_bilinear(
                           reshape(t, {1, 1, 2, 5}), 3, 7))); },
                       x, 1e-3),
            1e-3);
}

TEST(GradCheck, PreluSlopeGradientIsNegativeSideSum) {
  // d/da prelu(x, a) = sum over negative inputs of x
  tape<float>().clear();
  auto x = Tensor::create({4}, {-1.0f, 2.0f, -3.0f, 0.5f});
  auto a = Tensor::create({1}, {0.2f}, true);
  auto loss = sum(prelu(x, a));
  tape<float>().backward(loss);
  EXPECT_FLOAT_EQ(a.grad()[0], -4.0f);
  tape<float>().clear();
}

TEST(GradCheck, ConvTransposeInputGradMatchesConv) {
  // the adjoint of conv_transpose2d w.r.t. its input is a conv2d with the
  // same effective kernel
  tape<float>().clear();
  Rng rng(9);
  std::vector<float> vv(1 * 1 * 4 * 4);
  for (auto& w : vv) w = static_cast<float>(rng.normal(0.0, 1.0));
  auto v = Tensor::create({1, 1, 4, 4}, vv);
  float nrm = 0;
  for (float w : vv) nrm += w * w;
  auto g = Tensor::create({1}, {std::sqrt(nrm)});  // w == v
  auto b = Tensor::zeros({1});

  auto x = Tensor::create({1, 1, 4, 4}, std::vector<float>(16, 0.0f), true);
  auto y = conv_transpose2d(x, v, g, b, 2, 1);
  auto loss = sum(y);
  tape<float>().backward(loss);

  // conv2d of an all-ones tensor with the same kernel
  auto ones = Tensor::create({1, 1, 8, 8}, std::vector<float>(64, 1.0f));
  auto ref = conv2d(ones, v, g, b, 2, 1);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(x.grad()[i], ref.value()[i], 1e-4);
  tape<float>().clear();
}

}  // namespace
