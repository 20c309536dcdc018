// Copyright 2026 The sync-edg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Tensor is a cheap handle to a node of a dynamically built graph. Leaf
// tensors created with requires_grad=true are parameters; every op whose
// inputs include such a leaf records a backward closure. Calling backward()
// on a scalar walks the graph in reverse topological order and accumulates
// gradients into every node that requires them. Graphs are freed when the
// last handle to their root goes away.
//
// Batches are laid out row-major in the logical sense: one sample per row,
// one feature per column.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace sync_edg::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Returns the gradient buffer, zero-initialized on first use.
  Matrix& grad_buffer();
};

class Tensor {
 public:
  Tensor();
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor zeros(Eigen::Index rows, Eigen::Index cols) {
    return constant(Matrix::Zero(rows, cols));
  }
  static Tensor scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  const Matrix& value() const { return node_->value; }
  // Mutable access is for optimizers and checkpoint loading only.
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad_buffer(); }
  void zero_grad();

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;

  // Seeds d(this)/d(this) = 1 and back-propagates. This must be 1x1.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  friend Tensor make_result(Matrix, std::vector<Tensor>, std::function<void(Node&)>);
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

// Builds an op result. The backward closure is only kept when some input
// requires gradients.
Tensor make_result(Matrix value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Elementwise arithmetic; shapes must agree exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
// a + row broadcast over rows (row is 1 x cols).
Tensor add_row(const Tensor& a, const Tensor& row);
// a * col broadcast over columns (col is rows x 1).
Tensor mul_col(const Tensor& a, const Tensor& col);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// Pointwise nonlinearities.
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
// Gradient is passed only where lo < a < hi.
Tensor clamp(const Tensor& a, double lo, double hi);

// Shape manipulation.
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor gather_rows(const Tensor& a, std::span<const Eigen::Index> rows);
// Blocks gradient flow.
Tensor detach(const Tensor& a);
// Forward value `hard`, backward identity into `soft` (straight-through).
Tensor straight_through(Matrix hard, const Tensor& soft);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// rows x 1
Tensor sum_cols(const Tensor& a);
// 1 x cols
Tensor mean_rows(const Tensor& a);

// Row-wise normalizations; each returns the same shape except logsumexp.
Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
Tensor logsumexp_rows(const Tensor& a);  // rows x 1
// Rows scaled to unit L2 norm. Callers must reject zero rows beforehand.
Tensor l2_normalize_rows(const Tensor& a);

// Mean cross-entropy of row logits against integer labels.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// out(i, j) = log N(z_i ; mu_j, diag(exp(logvar_j))) for every pair of rows.
Tensor gaussian_log_density_matrix(const Tensor& z, const Tensor& mu,
                                   const Tensor& logvar);

}  // namespace sync_edg::ad
