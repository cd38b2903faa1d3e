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

#include "monobev/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

#include "monobev/errors.hpp"

namespace monobev::ad {

namespace {

thread_local bool g_grad_enabled = true;

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError(std::string(op) + ": shape mismatch");
  }
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kGeluK = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluC = 0.044715;

}  // namespace

void Node::accumulate(const Tensor& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Tensor value, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->grad.size() == 0) {
    return Tensor::Zero(node_->value.rows(), node_->value.cols());
  }
  return node_->grad;
}

Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(Node&)> backward_fn) {
  Var out(std::move(value), false);
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Var& v) { return v.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(inputs.size());
  for (auto& in : inputs) out.node_->parents.push_back(in.node());
  out.node_->backward = std::move(backward_fn);
  return out;
}

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw ValidationError("backward: root must be a scalar");
  }
  if (!root.requires_grad()) return;
  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->accumulate(Tensor::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ValidationError("matmul: inner dims differ");
  Tensor v = a.value() * b.value();
  return make_result(std::move(v), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) pa.accumulate_expr(n.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate_expr(pa.value.transpose() * n.grad);
  });
}

Var operator+(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_result(a.value() + b.value(), {a, b}, [](Node& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) p->accumulate(n.grad);
  });
}

Var operator-(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_result(a.value() - b.value(), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad) n.parents[1]->accumulate_expr(-n.grad);
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  return make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) pa.accumulate_expr(n.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate_expr(n.grad.cwiseProduct(pa.value));
  });
}

Var scale(const Var& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& n) {
    n.parents[0]->accumulate_expr(n.grad * s);
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ValidationError("add_row: row must be 1 x cols(a)");
  }
  Tensor v = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(v), {a, row}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
    if (n.parents[1]->requires_grad)
      n.parents[1]->accumulate_expr(n.grad.colwise().sum());
  });
}

Var linear(const Var& a, const Var& weight, const Var& bias) {
  return add_row(matmul(a, weight), bias);
}

Var gelu(const Var& a) {
  const Tensor& x = a.value();
  Tensor v = x.unaryExpr([](double z) {
    return 0.5 * z * (1.0 + std::tanh(kGeluK * (z + kGeluC * z * z * z)));
  });
  return make_result(std::move(v), {a}, [](Node& n) {
    const Tensor& x = n.parents[0]->value;
    Tensor d = x.unaryExpr([](double z) {
      const double t = std::tanh(kGeluK * (z + kGeluC * z * z * z));
      return 0.5 * (1.0 + t) +
             0.5 * z * (1.0 - t * t) * kGeluK * (1.0 + 3.0 * kGeluC * z * z);
    });
    n.parents[0]->accumulate_expr(n.grad.cwiseProduct(d));
  });
}

Var exp(const Var& a) {
  Tensor v = a.value().array().exp().matrix();
  return make_result(std::move(v), {a}, [](Node& n) {
    n.parents[0]->accumulate_expr(n.grad.cwiseProduct(n.value));
  });
}

Var layer_norm(const Var& a, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  if (gamma.cols() != cols || beta.cols() != cols) {
    throw ValidationError("layer_norm: affine width mismatch");
  }
  Tensor xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto x = a.value().row(r);
    const double mu = x.mean();
    const double var = (x.array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.array() - mu) * inv_std(r);
  }
  Tensor v = (xhat.array().rowwise() * gamma.value().row(0).array())
                 .rowwise() +
             beta.value().row(0).array();
  return make_result(
      std::move(v), {a, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
        Node& px = *n.parents[0];
        Node& pg = *n.parents[1];
        Node& pb = *n.parents[2];
        if (pg.requires_grad)
          pg.accumulate_expr(n.grad.cwiseProduct(xhat).colwise().sum());
        if (pb.requires_grad) pb.accumulate_expr(n.grad.colwise().sum());
        if (px.requires_grad) {
          Tensor dxhat = n.grad.array().rowwise() * pg.value.row(0).array();
          Tensor dx(dxhat.rows(), dxhat.cols());
          for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
            const double m1 = dxhat.row(r).mean();
            const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
            dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 -
                                      xhat.row(r).array() * m2);
          }
          px.accumulate(dx);
        }
      });
}

Var softmax_groups(const Var& a, int group) {
  if (group <= 0 || a.cols() % group != 0) {
    throw ValidationError("softmax_groups: width not divisible by group");
  }
  Tensor v(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index g = 0; g < a.cols(); g += group) {
      const auto seg = a.value().row(r).segment(g, group);
      const double mx = seg.maxCoeff();
      auto e = (seg.array() - mx).exp();
      v.row(r).segment(g, group) = e / e.sum();
    }
  }
  return make_result(std::move(v), {a}, [group](Node& n) {
    Tensor d(n.value.rows(), n.value.cols());
    for (Eigen::Index r = 0; r < n.value.rows(); ++r) {
      for (Eigen::Index g = 0; g < n.value.cols(); g += group) {
        const auto y = n.value.row(r).segment(g, group);
        const auto dy = n.grad.row(r).segment(g, group);
        const double dot = y.dot(dy);
        d.row(r).segment(g, group) = y.array() * (dy.array() - dot);
      }
    }
    n.parents[0]->accumulate(d);
  });
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw ValidationError("concat_cols: row mismatch");
  Tensor v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const Eigen::Index ca = a.cols();
  const Eigen::Index cb = b.cols();
  return make_result(std::move(v), {a, b}, [ca, cb](Node& n) {
    if (n.parents[0]->requires_grad)
      n.parents[0]->accumulate(n.grad.leftCols(ca));
    if (n.parents[1]->requires_grad)
      n.parents[1]->accumulate(n.grad.rightCols(cb));
  });
}

Var slice_cols(const Var& a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ValidationError("slice_cols: range out of bounds");
  }
  Tensor v = a.value().middleCols(start, count);
  return make_result(std::move(v), {a}, [start, count](Node& n) {
    Node& p = *n.parents[0];
    if (p.grad.size() == 0) p.grad = Tensor::Zero(p.value.rows(), p.value.cols());
    p.grad.middleCols(start, count) += n.grad;
  });
}

Var gather_rows(const Var& a, std::span<const int> rows) {
  std::vector<int> idx(rows.begin(), rows.end());
  Tensor v(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows()) {
      throw ValidationError("gather_rows: index out of range");
    }
    v.row(static_cast<Eigen::Index>(i)) = a.value().row(idx[i]);
  }
  return make_result(std::move(v), {a}, [idx = std::move(idx)](Node& n) {
    Node& p = *n.parents[0];
    if (p.grad.size() == 0) p.grad = Tensor::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      p.grad.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var scale_rows(const Var& a, const Eigen::VectorXd& weights) {
  if (weights.size() != a.rows()) {
    throw ValidationError("scale_rows: weight count mismatch");
  }
  Tensor v = weights.asDiagonal() * a.value();
  return make_result(std::move(v), {a}, [weights](Node& n) {
    n.parents[0]->accumulate_expr(weights.asDiagonal() * n.grad);
  });
}

Var broadcast_row(const Var& row, int n_rows) {
  if (row.rows() != 1) throw ValidationError("broadcast_row: expected 1 row");
  Tensor v = row.value().replicate(n_rows, 1);
  return make_result(std::move(v), {row}, [](Node& n) {
    n.parents[0]->accumulate_expr(n.grad.colwise().sum());
  });
}

Var resample_rows(const Var& a, const RowResampling& r) {
  if (static_cast<int>(r.taps.size()) != r.out_rows) {
    throw ValidationError("resample_rows: tap list size mismatch");
  }
  Tensor v = Tensor::Zero(r.out_rows, a.cols());
  for (int i = 0; i < r.out_rows; ++i) {
    for (const auto& [src, w] : r.taps[i]) v.row(i) += w * a.value().row(src);
  }
  return make_result(std::move(v), {a}, [r](Node& n) {
    Node& p = *n.parents[0];
    if (p.grad.size() == 0) p.grad = Tensor::Zero(p.value.rows(), p.value.cols());
    for (int i = 0; i < r.out_rows; ++i) {
      for (const auto& [src, w] : r.taps[i]) p.grad.row(src) += w * n.grad.row(i);
    }
  });
}

// ---------------------------------------------------------------------------

Var sum(const Var& a) {
  Tensor v(1, 1);
  v(0, 0) = a.value().sum();
  return make_result(std::move(v), {a}, [](Node& n) {
    Node& p = *n.parents[0];
    p.accumulate_expr(Tensor::Constant(p.value.rows(), p.value.cols(),
                                       n.grad(0, 0)));
  });
}

Var mean(const Var& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var mse_to(const Var& a, const Tensor& target) {
  if (target.rows() != a.rows() || target.cols() != a.cols()) {
    throw ValidationError("mse_to: shape mismatch");
  }
  const double count = static_cast<double>(a.value().size());
  Tensor diff = a.value() - target;
  Tensor v(1, 1);
  v(0, 0) = diff.squaredNorm() / count;
  return make_result(std::move(v), {a},
                     [diff = std::move(diff), count](Node& n) {
                       n.parents[0]->accumulate_expr(diff *
                                                     (2.0 * n.grad(0, 0) / count));
                     });
}

Var l1_to(const Var& a, const Tensor& target) {
  if (target.rows() != a.rows() || target.cols() != a.cols()) {
    throw ValidationError("l1_to: shape mismatch");
  }
  Tensor diff = a.value() - target;
  Tensor v(1, 1);
  v(0, 0) = diff.cwiseAbs().sum();
  Tensor sign = diff.unaryExpr(
      [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); });
  return make_result(std::move(v), {a}, [sign = std::move(sign)](Node& n) {
    n.parents[0]->accumulate_expr(sign * n.grad(0, 0));
  });
}

Var bce_with_logits_mean(const Var& logits, const Tensor& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw ValidationError("bce_with_logits_mean: shape mismatch");
  }
  const Tensor& x = logits.value();
  const double count = static_cast<double>(x.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    total += softplus(x.data()[i]) - targets.data()[i] * x.data()[i];
  }
  Tensor v(1, 1);
  v(0, 0) = total / count;
  return make_result(std::move(v), {logits}, [targets, count](Node& n) {
    const Tensor& x = n.parents[0]->value;
    Tensor d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      d.data()[i] = (sigmoid(x.data()[i]) - targets.data()[i]) / count;
    }
    n.parents[0]->accumulate_expr(d * n.grad(0, 0));
  });
}

Var sigmoid_focal_sum(const Var& logits, const Tensor& targets, double alpha,
                      double gamma) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw ValidationError("sigmoid_focal_sum: shape mismatch");
  }
  const Tensor& x = logits.value();
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double z = x.data()[i];
    const double p = sigmoid(z);
    if (targets.data()[i] > 0.5) {
      total += alpha * std::pow(1.0 - p, gamma) * softplus(-z);
    } else {
      total += (1.0 - alpha) * std::pow(p, gamma) * softplus(z);
    }
  }
  Tensor v(1, 1);
  v(0, 0) = total;
  return make_result(std::move(v), {logits}, [targets, alpha, gamma](Node& n) {
    const Tensor& x = n.parents[0]->value;
    Tensor d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double z = x.data()[i];
      const double p = sigmoid(z);
      if (targets.data()[i] > 0.5) {
        // d/dz [ -a (1-p)^g log p ]
        d.data()[i] = alpha * std::pow(1.0 - p, gamma) *
                      (-gamma * p * softplus(-z) - (1.0 - p));
      } else {
        // d/dz [ -(1-a) p^g log(1-p) ]
        d.data()[i] = (1.0 - alpha) * std::pow(p, gamma) *
                      (gamma * (1.0 - p) * softplus(z) + p);
      }
    }
    n.parents[0]->accumulate_expr(d * n.grad(0, 0));
  });
}

// ---------------------------------------------------------------------------

void SamplingPlan::finalize() {
  std::stable_sort(hits.begin(), hits.end(),
                   [](const SamplingHit& a, const SamplingHit& b) {
                     return a.query < b.query;
                   });
  groups_per_query.assign(num_queries, 0);
  std::size_t i = 0;
  while (i < hits.size()) {
    std::size_t j = i;
    std::vector<int> groups;
    while (j < hits.size() && hits[j].query == hits[i].query) {
      if (std::find(groups.begin(), groups.end(), hits[j].group) ==
          groups.end()) {
        groups.push_back(hits[j].group);
      }
      ++j;
    }
    groups_per_query[hits[i].query] = static_cast<int>(groups.size());
    i = j;
  }
}

Eigen::RowVectorXd bilinear_sample(const Tensor& values, MapShape shape,
                                   double x, double y) {
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(values.cols());
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double tx = x - fx0;
  const double ty = y - fy0;
  const int xs[2] = {x0, x0 + 1};
  const int ys[2] = {y0, y0 + 1};
  const double wx[2] = {1.0 - tx, tx};
  const double wy[2] = {1.0 - ty, ty};
  for (int j = 0; j < 2; ++j) {
    if (ys[j] < 0 || ys[j] >= shape.height) continue;
    for (int i = 0; i < 2; ++i) {
      if (xs[i] < 0 || xs[i] >= shape.width) continue;
      out += wx[i] * wy[j] * values.row(ys[j] * shape.width + xs[i]);
    }
  }
  return out;
}

namespace {

struct Corner {
  int row = -1;  // -1 when outside the map
  double w = 0.0;
  double dwx = 0.0;
  double dwy = 0.0;
};

void corners(MapShape shape, double x, double y, Corner (&out)[4]) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double tx = x - fx0;
  const double ty = y - fy0;
  int k = 0;
  for (int j = 0; j < 2; ++j) {
    for (int i = 0; i < 2; ++i, ++k) {
      const int cx = x0 + i;
      const int cy = y0 + j;
      const double wx = i ? tx : 1.0 - tx;
      const double wy = j ? ty : 1.0 - ty;
      Corner& c = out[k];
      c.row = (cx < 0 || cy < 0 || cx >= shape.width || cy >= shape.height)
                  ? -1
                  : cy * shape.width + cx;
      c.w = wx * wy;
      c.dwx = (i ? 1.0 : -1.0) * wy;
      c.dwy = (j ? 1.0 : -1.0) * wx;
    }
  }
}

}  // namespace

Var deformable_sample(std::span<const Var> values, const Var& offsets,
                      const Var& weights, const SamplingPlan& plan) {
  const int H = plan.num_heads;
  const int A = plan.num_anchors;
  const int P = plan.num_points;
  if (values.size() != plan.maps.size() || values.empty()) {
    throw ValidationError("deformable_sample: map count mismatch");
  }
  const Eigen::Index C = values[0].cols();
  if (C % H != 0) throw ValidationError("deformable_sample: C % heads != 0");
  const int D = static_cast<int>(C / H);
  for (std::size_t m = 0; m < values.size(); ++m) {
    if (values[m].cols() != C ||
        values[m].rows() != plan.maps[m].height * plan.maps[m].width) {
      throw ValidationError("deformable_sample: map shape mismatch");
    }
  }
  if (offsets.rows() != plan.num_queries || offsets.cols() != H * A * P * 2 ||
      weights.rows() != plan.num_queries || weights.cols() != H * A * P) {
    throw ValidationError("deformable_sample: offset/weight shape mismatch");
  }

  const Tensor& off = offsets.value();
  const Tensor& wts = weights.value();
  Tensor out = Tensor::Zero(plan.num_queries, C);
  for (const SamplingHit& hit : plan.hits) {
    const double inv_g = 1.0 / plan.groups_per_query[hit.query];
    const Tensor& val = values[hit.map].value();
    const MapShape shape = plan.maps[hit.map];
    for (int h = 0; h < H; ++h) {
      for (int p = 0; p < P; ++p) {
        const int col = (h * A + hit.anchor) * P + p;
        const double x = hit.x + off(hit.query, 2 * col);
        const double y = hit.y + off(hit.query, 2 * col + 1);
        const double w = wts(hit.query, col) * inv_g;
        Corner cs[4];
        corners(shape, x, y, cs);
        for (const Corner& c : cs) {
          if (c.row < 0) continue;
          out.row(hit.query).segment(h * D, D) +=
              (w * c.w) * val.row(c.row).segment(h * D, D);
        }
      }
    }
  }

  std::vector<Var> inputs(values.begin(), values.end());
  inputs.push_back(offsets);
  inputs.push_back(weights);
  const std::size_t num_maps = values.size();
  return make_result(
      std::move(out), std::move(inputs), [plan, num_maps, H, A, P, D](Node& n) {
        Node& off_node = *n.parents[num_maps];
        Node& wts_node = *n.parents[num_maps + 1];
        const Tensor& off = off_node.value;
        const Tensor& wts = wts_node.value;
        Tensor d_off = Tensor::Zero(off.rows(), off.cols());
        Tensor d_wts = Tensor::Zero(wts.rows(), wts.cols());
        for (std::size_t m = 0; m < num_maps; ++m) {
          Node& vm = *n.parents[m];
          if (vm.requires_grad && vm.grad.size() == 0) {
            vm.grad = Tensor::Zero(vm.value.rows(), vm.value.cols());
          }
        }
        for (const SamplingHit& hit : plan.hits) {
          const double inv_g = 1.0 / plan.groups_per_query[hit.query];
          Node& vm = *n.parents[hit.map];
          const Tensor& val = vm.value;
          const MapShape shape = plan.maps[hit.map];
          for (int h = 0; h < H; ++h) {
            const auto gout = n.grad.row(hit.query).segment(h * D, D);
            for (int p = 0; p < P; ++p) {
              const int col = (h * A + hit.anchor) * P + p;
              const double x = hit.x + off(hit.query, 2 * col);
              const double y = hit.y + off(hit.query, 2 * col + 1);
              const double w = wts(hit.query, col) * inv_g;
              Corner cs[4];
              corners(shape, x, y, cs);
              double dsample_dw = 0.0;
              double dx = 0.0;
              double dy = 0.0;
              for (const Corner& c : cs) {
                if (c.row < 0) continue;
                const double g_dot_v =
                    gout.dot(val.row(c.row).segment(h * D, D));
                dsample_dw += c.w * g_dot_v;
                dx += c.dwx * g_dot_v;
                dy += c.dwy * g_dot_v;
                if (vm.requires_grad) {
                  vm.grad.row(c.row).segment(h * D, D) += (w * c.w) * gout;
                }
              }
              d_wts(hit.query, col) += inv_g * dsample_dw;
              d_off(hit.query, 2 * col) += w * dx;
              d_off(hit.query, 2 * col + 1) += w * dy;
            }
          }
        }
        if (off_node.requires_grad) off_node.accumulate(d_off);
        if (wts_node.requires_grad) wts_node.accumulate(d_wts);
      });
}

}  // namespace monobev::ad
