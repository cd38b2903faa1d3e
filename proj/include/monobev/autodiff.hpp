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

#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Var is a shared handle to a graph node; operations record a
// backward closure when any input requires a gradient and gradient recording
// is enabled on the calling thread.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace monobev::ad {

using Tensor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Tensor& g);
  template <typename Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) grad = Tensor::Zero(value.rows(), value.cols());
    grad += g;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  // Gradient accumulated by backward(); zeros if none arrived.
  Tensor grad() const;
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }

  // A graph-free copy of the current value.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  friend Var make_result(Tensor value, std::vector<Var> inputs,
                         std::function<void(Node&)> backward);
  std::shared_ptr<Node> node_;
};

// Records a result node. `backward` receives the result node; its parents
// appear in `inputs` order.
Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(Node&)> backward);

// Accumulates d(root)/d(node) into every reachable node that requires a
// gradient. `root` must be 1x1.
void backward(const Var& root);

bool grad_enabled();

// Disables gradient recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- elementwise and linear algebra -------------------------------------

Var matmul(const Var& a, const Var& b);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// Adds a 1 x C row to every row of a.
Var add_row(const Var& a, const Var& row);
// a * W + b with W (in x out) and b (1 x out).
Var linear(const Var& a, const Var& weight, const Var& bias);
Var gelu(const Var& a);
Var exp(const Var& a);
// Per-row layer normalization followed by the affine (1 x C) gamma, beta.
Var layer_norm(const Var& a, const Var& gamma, const Var& beta,
               double eps = 1e-5);
// Softmax over consecutive column groups of size `group`.
Var softmax_groups(const Var& a, int group);
Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& a, int start, int count);
Var gather_rows(const Var& a, std::span<const int> rows);
// Multiplies each row i by the constant weights[i].
Var scale_rows(const Var& a, const Eigen::VectorXd& weights);
// Repeats a 1 x C row `n` times.
Var broadcast_row(const Var& row, int n);

// Sparse row resampling: out.row(i) = sum_k w[i][k] * a.row(idx[i][k]).
struct RowResampling {
  int out_rows = 0;
  std::vector<std::vector<std::pair<int, double>>> taps;
};
Var resample_rows(const Var& a, const RowResampling& r);

// ---- reductions and losses ----------------------------------------------

Var sum(const Var& a);
Var mean(const Var& a);
// Mean squared difference to a constant target.
Var mse_to(const Var& a, const Tensor& target);
// Sum of |a - target| over entries.
Var l1_to(const Var& a, const Tensor& target);
// Mean binary cross-entropy with logits.
Var bce_with_logits_mean(const Var& logits, const Tensor& targets);
// Summed sigmoid focal loss.
Var sigmoid_focal_sum(const Var& logits, const Tensor& targets, double alpha,
                      double gamma);

// ---- deformable sampling --------------------------------------------------

// A feature map of `height` x `width` cells stored as rows of a
// (height * width) x C value matrix, row index y * width + x.
struct MapShape {
  int height = 0;
  int width = 0;
};

// One reference location of one query in one map. Results of hits sharing a
// group are summed; groups are then averaged per query.
struct SamplingHit {
  int query = 0;
  int anchor = 0;  // selects offset/weight columns
  int map = 0;
  int group = 0;
  double x = 0.0;  // continuous column coordinate, cell centers on integers
  double y = 0.0;
};

struct SamplingPlan {
  int num_queries = 0;
  int num_heads = 1;
  int num_anchors = 1;
  int num_points = 1;
  std::vector<MapShape> maps;
  std::vector<SamplingHit> hits;  // sorted by query
  std::vector<int> groups_per_query;

  void finalize();  // sorts hits and counts groups per query
};

// out[q, head h] = (1/G_q) sum_{hits of q} sum_p w[q,h,a,p] *
//   bilinear(values[map], (x, y) + offset[q,h,a,p])[head h channels]
// offsets: N x (heads*anchors*points*2), column ((h*A + a)*P + p)*2 + {x,y}
// weights: N x (heads*anchors*points). Samples outside a map read zeros.
Var deformable_sample(std::span<const Var> values, const Var& offsets,
                      const Var& weights, const SamplingPlan& plan);

// Bilinear read of a single-channel-group map at (x, y), zero padded.
Eigen::RowVectorXd bilinear_sample(const Tensor& values, MapShape shape,
                                   double x, double y);

}  // namespace monobev::ad
