/* Copyright 2026 The monobev Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "monobev/autodiff.hpp"

namespace monobev::ad {
namespace {

Tensor random_tensor(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  return t;
}

// Central-difference check of d f(inputs) / d inputs for every entry.
void expect_gradients(const std::function<Var(std::vector<Var>&)>& f, std::vector<Var> inputs,
                      double tol = 1e-6) {
  for (Var& v : inputs) v.zero_grad();
  Var out = f(inputs);
  ASSERT_EQ(out.rows(), 1);
  ASSERT_EQ(out.cols(), 1);
  backward(out);
  const double h = 1e-6;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = inputs[k].grad();
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      double& slot = inputs[k].mutable_value().data()[i];
      const double original = slot;
      slot = original + h;
      const double up = f(inputs).scalar();
      slot = original - h;
      const double down = f(inputs).scalar();
      slot = original;
      const double numeric = (up - down) / (2 * h);
      EXPECT_NEAR(analytic.data()[i], numeric, tol * std::max(1.0, std::abs(numeric)))
          << "input " << k << " entry " << i;
    }
  }
}

// Projects a matrix output to a scalar with fixed random weights so every
// entry of the output contributes a distinct gradient.
Var project(const Var& v, std::uint64_t seed = 99) {
  return sum(hadamard(v, Var(random_tensor(v.rows(), v.cols(), seed))));
}

TEST(Autodiff, Matmul) {
  expect_gradients([](auto& in) { return project(matmul(in[0], in[1])); },
                   {Var::parameter(random_tensor(3, 4, 1)), Var::parameter(random_tensor(4, 2, 2))});
}

TEST(Autodiff, AddSubScale) {
  expect_gradients(
      [](auto& in) { return project(scale(in[0] + in[1], 1.5) - in[1]); },
      {Var::parameter(random_tensor(2, 3, 3)), Var::parameter(random_tensor(2, 3, 4))});
}

TEST(Autodiff, LinearAndAddRow) {
  expect_gradients(
      [](auto& in) { return project(add_row(linear(in[0], in[1], in[2]), in[2])); },
      {Var::parameter(random_tensor(4, 3, 5)), Var::parameter(random_tensor(3, 2, 6)),
       Var::parameter(random_tensor(1, 2, 7))});
}

TEST(Autodiff, GeluAndExp) {
  expect_gradients([](auto& in) { return project(gelu(in[0])); },
                   {Var::parameter(random_tensor(3, 5, 8, -3.0, 3.0))});
  expect_gradients([](auto& in) { return project(exp(in[0])); },
                   {Var::parameter(random_tensor(3, 5, 9))});
}

TEST(Autodiff, LayerNorm) {
  expect_gradients([](auto& in) { return project(layer_norm(in[0], in[1], in[2])); },
                   {Var::parameter(random_tensor(4, 6, 10)), Var::parameter(random_tensor(1, 6, 11)),
                    Var::parameter(random_tensor(1, 6, 12))},
                   1e-5);
}

TEST(Autodiff, LayerNormRowsAreStandardized) {
  const Var out = layer_norm(Var(random_tensor(3, 8, 13)), Var(Tensor::Ones(1, 8)),
                             Var(Tensor::Zero(1, 8)), 0.0);
  for (Eigen::Index r = 0; r < 3; ++r) {
    EXPECT_NEAR(out.value().row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(out.value().row(r).squaredNorm() / 8.0, 1.0, 1e-12);
  }
}

TEST(Autodiff, SoftmaxGroups) {
  const Var x = Var::parameter(random_tensor(3, 6, 14, -2.0, 2.0));
  const Var s = softmax_groups(x, 3);
  for (Eigen::Index r = 0; r < 3; ++r) {
    EXPECT_NEAR(s.value().row(r).head(3).sum(), 1.0, 1e-12);
    EXPECT_NEAR(s.value().row(r).tail(3).sum(), 1.0, 1e-12);
  }
  expect_gradients([](auto& in) { return project(softmax_groups(in[0], 3)); }, {x});
}

TEST(Autodiff, ConcatSliceGather) {
  const std::vector<int> rows{2, 0, 2};
  expect_gradients(
      [&](auto& in) {
        const Var c = concat_cols(in[0], in[1]);
        return project(gather_rows(slice_cols(c, 1, 3), rows));
      },
      {Var::parameter(random_tensor(3, 2, 15)), Var::parameter(random_tensor(3, 3, 16))});
}

TEST(Autodiff, ScaleRowsAndBroadcast) {
  const Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
  expect_gradients(
      [&](auto& in) { return project(scale_rows(in[0], w) + broadcast_row(in[1], 4)); },
      {Var::parameter(random_tensor(4, 3, 17)), Var::parameter(random_tensor(1, 3, 18))});
}

TEST(Autodiff, ResampleRows) {
  RowResampling r;
  r.out_rows = 2;
  r.taps = {{{0, 0.25}, {2, 0.75}}, {{1, -1.0}, {1, 0.5}}};
  const Var a = Var::parameter(random_tensor(3, 2, 19));
  const Var out = resample_rows(a, r);
  EXPECT_LT((out.value().row(0) - (0.25 * a.value().row(0) + 0.75 * a.value().row(2)))
                .cwiseAbs()
                .maxCoeff(),
            1e-15);
  expect_gradients([&](auto& in) { return project(resample_rows(in[0], r)); }, {a});
}

TEST(Autodiff, Reductions) {
  const Tensor target = random_tensor(3, 4, 20);
  const Tensor labels = (random_tensor(3, 4, 21, 0.0, 1.0).array() > 0.5).cast<double>().matrix();
  const auto x = Var::parameter(random_tensor(3, 4, 22, -2.0, 2.0));
  expect_gradients([](auto& in) { return mean(in[0]); }, {x});
  expect_gradients([&](auto& in) { return mse_to(in[0], target); }, {x});
  expect_gradients([&](auto& in) { return l1_to(in[0], target); }, {x});
  expect_gradients([&](auto& in) { return bce_with_logits_mean(in[0], labels); }, {x});
  expect_gradients([&](auto& in) { return sigmoid_focal_sum(in[0], labels, 0.25, 2.0); }, {x});
}

TEST(Autodiff, LossValuesMatchDefinitions) {
  Tensor logits(1, 2);
  logits << 0.0, 2.0;
  Tensor labels(1, 2);
  labels << 1.0, 0.0;
  const double p1 = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_NEAR(bce_with_logits_mean(Var(logits), labels).scalar(),
              0.5 * (std::log(2.0) - std::log(1.0 - p1)), 1e-12);
  const double focal = 0.25 * 0.25 * std::log(2.0) + 0.75 * p1 * p1 * -std::log(1.0 - p1);
  EXPECT_NEAR(sigmoid_focal_sum(Var(logits), labels, 0.25, 2.0).scalar(), focal, 1e-12);
  // Saturated logits stay finite.
  Tensor big(1, 1);
  big << 800.0;
  EXPECT_TRUE(std::isfinite(bce_with_logits_mean(Var(big), Tensor::Zero(1, 1)).scalar()));
}

TEST(Autodiff, GradientsAccumulateAcrossUses) {
  const Var x = Var::parameter(random_tensor(2, 2, 23));
  backward(sum(x + x));
  EXPECT_TRUE((x.grad().array() == 2.0).all());
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  const Var x = Var::parameter(random_tensor(2, 2, 24));
  EXPECT_TRUE(grad_enabled());
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    EXPECT_FALSE(sum(x).requires_grad());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(sum(x).requires_grad());
  EXPECT_FALSE(x.detach().requires_grad());
}

TEST(BilinearSample, ConstantMapAndZeroPadding) {
  const MapShape shape{3, 4};
  const Tensor values = Tensor::Constant(12, 2, 5.0);
  EXPECT_NEAR(bilinear_sample(values, shape, 1.3, 0.7)(0), 5.0, 1e-12);
  // Half a cell beyond the last column blends with the zero border.
  EXPECT_NEAR(bilinear_sample(values, shape, 3.5, 1.0)(1), 2.5, 1e-12);
  EXPECT_EQ(bilinear_sample(values, shape, -2.0, 1.0)(0), 0.0);
}

TEST(BilinearSample, SingleBumpOracle) {
  const MapShape shape{2, 2};
  Tensor values = Tensor::Zero(4, 1);
  values(3, 0) = 1.0;  // cell (x 1, y 1)
  for (double x : {0.0, 0.25, 0.6, 1.0}) {
    for (double y : {0.0, 0.5, 0.9, 1.0}) {
      EXPECT_NEAR(bilinear_sample(values, shape, x, y)(0), x * y, 1e-12);
    }
  }
}

TEST(DeformableSample, GradientsThroughValuesOffsetsAndWeights) {
  SamplingPlan plan;
  plan.num_queries = 2;
  plan.num_heads = 2;
  plan.num_anchors = 1;
  plan.num_points = 2;
  plan.maps = {{3, 4}, {2, 3}};
  plan.hits = {{0, 0, 0, 0, 1.2, 0.7}, {0, 0, 1, 1, 0.4, 0.3}, {1, 0, 1, 0, 1.6, 0.9}};
  plan.finalize();
  const int cols = plan.num_heads * plan.num_anchors * plan.num_points;
  expect_gradients(
      [&](auto& in) {
        const std::vector<Var> maps{in[0], in[1]};
        return project(deformable_sample(maps, in[2], in[3], plan));
      },
      {Var::parameter(random_tensor(12, 4, 25)), Var::parameter(random_tensor(6, 4, 26)),
       Var::parameter(random_tensor(2, cols * 2, 27, -0.3, 0.3)),
       Var::parameter(random_tensor(2, cols, 28))},
      1e-5);
}

TEST(DeformableSample, ZeroOffsetsReadBilinearValues) {
  SamplingPlan plan;
  plan.num_queries = 1;
  plan.maps = {{3, 4}};
  plan.hits = {{0, 0, 0, 0, 1.25, 0.5}};
  plan.finalize();
  const Tensor values = random_tensor(12, 3, 29);
  Tensor weights(1, 1);
  weights << 1.0;
  const std::vector<Var> maps{Var(values)};
  const Var out = deformable_sample(maps, Var(Tensor::Zero(1, 2)), Var(weights), plan);
  EXPECT_LT((out.value().row(0) - bilinear_sample(values, {3, 4}, 1.25, 0.5)).cwiseAbs().maxCoeff(),
            1e-12);
}

}  // namespace
}  // namespace monobev::ad
