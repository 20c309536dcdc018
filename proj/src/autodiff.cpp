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

#include "sync_edg/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace sync_edg::ad {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

// Accumulates into parent i when it wants gradients.
template <typename Expr>
void accumulate(Node& self, std::size_t i, const Expr& g) {
  Node& p = *self.parents[i];
  if (p.requires_grad) p.grad_buffer() += g;
}

}  // namespace

Matrix& Node::grad_buffer() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }
  return grad;
}

Tensor::Tensor() : node_(std::make_shared<Node>()) {}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Tensor::zero_grad() {
  node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("item(): tensor is not 1x1");
  return node_->value(0, 0);
}

void Tensor::backward() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("backward(): tensor is not 1x1");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS for a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && !visited.contains(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior gradients start from zero on every call; leaves accumulate.
  for (Node* n : order) {
    if (n->backward_fn) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  }
  node_->grad_buffer() += Matrix::Ones(1, 1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

Tensor make_result(Matrix value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  return make_result(a.value() * b.value(), {a, b}, [](Node& s) {
    const Matrix& A = s.parents[0]->value;
    const Matrix& B = s.parents[1]->value;
    accumulate(s, 0, s.grad * B.transpose());
    accumulate(s, 1, A.transpose() * s.grad);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  return make_result(a.value() * b.value().transpose(), {a, b}, [](Node& s) {
    const Matrix& A = s.parents[0]->value;
    const Matrix& B = s.parents[1]->value;
    accumulate(s, 0, s.grad * B);
    accumulate(s, 1, s.grad.transpose() * A);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return make_result(a.value() + b.value(), {a, b}, [](Node& s) {
    accumulate(s, 0, s.grad);
    accumulate(s, 1, s.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return make_result(a.value() - b.value(), {a, b}, [](Node& s) {
    accumulate(s, 0, s.grad);
    accumulate(s, 1, -s.grad);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  return make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& s) {
    accumulate(s, 0, s.grad.cwiseProduct(s.parents[1]->value));
    accumulate(s, 1, s.grad.cwiseProduct(s.parents[0]->value));
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  return make_result(a.value().cwiseQuotient(b.value()), {a, b}, [](Node& s) {
    const Matrix& B = s.parents[1]->value;
    accumulate(s, 0, s.grad.cwiseQuotient(B));
    accumulate(s, 1, -s.grad.cwiseProduct(s.value).cwiseQuotient(B));
  });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "maximum");
  return make_result(a.value().cwiseMax(b.value()), {a, b}, [](Node& s) {
    const Matrix& A = s.parents[0]->value;
    const Matrix& B = s.parents[1]->value;
    // Ties route the gradient to the first argument.
    const Matrix pick_a = (A.array() >= B.array()).cast<double>().matrix();
    accumulate(s, 0, s.grad.cwiseProduct(pick_a));
    accumulate(s, 1, s.grad.cwiseProduct((1.0 - pick_a.array()).matrix()));
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: row must be 1 x cols");
  }
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return make_result(std::move(out), {a, row}, [](Node& s) {
    accumulate(s, 0, s.grad);
    accumulate(s, 1, s.grad.colwise().sum());
  });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw std::invalid_argument("mul_col: col must be rows x 1");
  }
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  return make_result(std::move(out), {a, col}, [](Node& s) {
    const Matrix& A = s.parents[0]->value;
    const Matrix& C = s.parents[1]->value;
    accumulate(s, 0, (s.grad.array().colwise() * C.col(0).array()).matrix());
    accumulate(s, 1, s.grad.cwiseProduct(A).rowwise().sum());
  });
}

Tensor scale(const Tensor& a, double f) {
  return make_result(a.value() * f, {a}, [f](Node& s) { accumulate(s, 0, s.grad * f); });
}

Tensor add_scalar(const Tensor& a, double c) {
  return make_result((a.value().array() + c).matrix(), {a},
                     [](Node& s) { accumulate(s, 0, s.grad); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return make_result(a.value().cwiseMax(0.0), {a}, [](Node& s) {
    const Matrix& A = s.parents[0]->value;
    accumulate(s, 0, s.grad.cwiseProduct((A.array() > 0.0).cast<double>().matrix()));
  });
}

Tensor tanh(const Tensor& a) {
  return make_result(a.value().array().tanh().matrix(), {a}, [](Node& s) {
    accumulate(s, 0, (s.grad.array() * (1.0 - s.value.array().square())).matrix());
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make_result(std::move(out), {a}, [](Node& s) {
    accumulate(s, 0, (s.grad.array() * s.value.array() * (1.0 - s.value.array())).matrix());
  });
}

Tensor exp(const Tensor& a) {
  return make_result(a.value().array().exp().matrix(), {a}, [](Node& s) {
    accumulate(s, 0, s.grad.cwiseProduct(s.value));
  });
}

Tensor log(const Tensor& a) {
  return make_result(a.value().array().log().matrix(), {a}, [](Node& s) {
    accumulate(s, 0, s.grad.cwiseQuotient(s.parents[0]->value));
  });
}

Tensor sqrt(const Tensor& a) {
  return make_result(a.value().array().sqrt().matrix(), {a}, [](Node& s) {
    accumulate(s, 0, (0.5 * s.grad.array() / s.value.array()).matrix());
  });
}

Tensor square(const Tensor& a) {
  return make_result(a.value().array().square().matrix(), {a}, [](Node& s) {
    accumulate(s, 0, (2.0 * s.grad.array() * s.parents[0]->value.array()).matrix());
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return make_result(std::move(out), {a}, [lo, hi](Node& s) {
    const auto& A = s.parents[0]->value.array();
    const Matrix pass = ((A > lo) && (A < hi)).cast<double>().matrix();
    accumulate(s, 0, s.grad.cwiseProduct(pass));
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(out), std::move(inputs), [offsets](Node& s) {
    for (std::size_t i = 0; i < s.parents.size(); ++i) {
      const Eigen::Index c = s.parents[i]->value.cols();
      accumulate(s, i, s.grad.middleCols(offsets[i], c));
    }
  });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  return make_result(a.value().middleCols(start, count), {a}, [start, count](Node& s) {
    Node& p = *s.parents[0];
    if (p.requires_grad) p.grad_buffer().middleCols(start, count) += s.grad;
  });
}

Tensor gather_rows(const Tensor& a, std::span<const Eigen::Index> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw std::out_of_range("gather_rows: bad index");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  return make_result(std::move(out), {a}, [idx](Node& s) {
    Node& p = *s.parents[0];
    if (!p.requires_grad) return;
    Matrix& g = p.grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      g.row(idx[i]) += s.grad.row(static_cast<Eigen::Index>(i));
    }
  });
}

Tensor detach(const Tensor& a) { return Tensor::constant(a.value()); }

Tensor straight_through(Matrix hard, const Tensor& soft) {
  if (hard.rows() != soft.rows() || hard.cols() != soft.cols()) {
    throw std::invalid_argument("straight_through: shape mismatch");
  }
  return make_result(std::move(hard), {soft}, [](Node& s) { accumulate(s, 0, s.grad); });
}

Tensor sum(const Tensor& a) {
  return make_result(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& s) {
    const Node& p = *s.parents[0];
    accumulate(s, 0, Matrix::Constant(p.value.rows(), p.value.cols(), s.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  return make_result(Matrix::Constant(1, 1, a.value().sum() / n), {a}, [n](Node& s) {
    const Node& p = *s.parents[0];
    accumulate(s, 0, Matrix::Constant(p.value.rows(), p.value.cols(), s.grad(0, 0) / n));
  });
}

Tensor sum_cols(const Tensor& a) {
  return make_result(a.value().rowwise().sum(), {a}, [](Node& s) {
    const Node& p = *s.parents[0];
    accumulate(s, 0, s.grad.col(0).replicate(1, p.value.cols()));
  });
}

Tensor mean_rows(const Tensor& a) {
  const double n = static_cast<double>(a.rows());
  return make_result(a.value().colwise().mean(), {a}, [n](Node& s) {
    const Node& p = *s.parents[0];
    accumulate(s, 0, (s.grad.row(0) / n).replicate(p.value.rows(), 1));
  });
}

Tensor softmax_rows(const Tensor& a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return make_result(std::move(out), {a}, [](Node& s) {
    // dx = y * (g - sum(g * y))
    const Matrix& y = s.value;
    const Eigen::VectorXd dot = s.grad.cwiseProduct(y).rowwise().sum();
    accumulate(s, 0, (y.array() * (s.grad.colwise() - dot).array()).matrix());
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  Matrix out = a.value();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    const double lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  return make_result(std::move(out), {a}, [](Node& s) {
    const Matrix soft = s.value.array().exp().matrix();
    const Eigen::VectorXd gsum = s.grad.rowwise().sum();
    accumulate(s, 0, s.grad - (soft.array().colwise() * gsum.array()).matrix());
  });
}

Tensor logsumexp_rows(const Tensor& a) {
  const Matrix& v = a.value();
  Matrix out(v.rows(), 1);
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    out(r, 0) = m + std::log((v.row(r).array() - m).exp().sum());
  }
  return make_result(std::move(out), {a}, [](Node& s) {
    const Matrix& v = s.parents[0]->value;
    const Matrix w = (v.colwise() - s.value.col(0)).array().exp().matrix();
    accumulate(s, 0, (w.array().colwise() * s.grad.col(0).array()).matrix());
  });
}

Tensor l2_normalize_rows(const Tensor& a) {
  const Eigen::VectorXd norms = a.value().rowwise().norm();
  Matrix out = a.value().array().colwise() / norms.array();
  return make_result(std::move(out), {a}, [norms](Node& s) {
    // d(x/|x|) = (g - u (u.g)) / |x|
    const Matrix& u = s.value;
    const Eigen::VectorXd dot = s.grad.cwiseProduct(u).rowwise().sum();
    Matrix g = s.grad - (u.array().colwise() * dot.array()).matrix();
    accumulate(s, 0, (g.array().colwise() / norms.array()).matrix());
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
    throw std::invalid_argument("cross_entropy: label count does not match batch");
  }
  const Eigen::Index classes = logits.cols();
  std::vector<int> y(labels.begin(), labels.end());
  for (int l : y) {
    if (l < 0 || l >= classes) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(l) + " out of range");
    }
  }
  const Tensor logp = log_softmax_rows(logits);
  Matrix pick = Matrix::Zero(logits.rows(), classes);
  for (std::size_t i = 0; i < y.size(); ++i) pick(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return neg(mean(sum_cols(mul(logp, Tensor::constant(std::move(pick))))));
}

Tensor gaussian_log_density_matrix(const Tensor& z, const Tensor& mu, const Tensor& logvar) {
  require_same_shape(mu, logvar, "gaussian_log_density_matrix");
  if (z.cols() != mu.cols()) {
    throw std::invalid_argument("gaussian_log_density_matrix: dimension mismatch");
  }
  const Eigen::Index nz = z.rows();
  const Eigen::Index nq = mu.rows();
  const Eigen::Index d = z.cols();
  const double log2pi = std::log(2.0 * std::numbers::pi);
  const Matrix& Z = z.value();
  const Matrix& M = mu.value();
  const Matrix& L = logvar.value();
  const Matrix P = (-L.array()).exp().matrix();  // precisions
  // sum_d (z-m)^2 p = z^2.p - 2 z.(m p) + m^2.p
  const Matrix Z2 = Z.array().square().matrix();
  const Matrix MP = M.cwiseProduct(P);
  const Eigen::VectorXd m2p = M.cwiseProduct(MP).rowwise().sum();
  const Eigen::VectorXd lsum = L.rowwise().sum();
  Matrix quad = Z2 * P.transpose() - 2.0 * Z * MP.transpose();
  quad.rowwise() += m2p.transpose();
  Matrix out = -0.5 * quad;
  out.rowwise() -= 0.5 * (lsum.transpose().array() + static_cast<double>(d) * log2pi).matrix();
  return make_result(std::move(out), {z, mu, logvar}, [](Node& s) {
    const Matrix& Z = s.parents[0]->value;
    const Matrix& M = s.parents[1]->value;
    const Matrix& L = s.parents[2]->value;
    const Matrix& G = s.grad;  // nz x nq
    const Matrix P = (-L.array()).exp().matrix();
    const Matrix MP = M.cwiseProduct(P);
    // d/dz_i = sum_j G_ij * -(z_i - m_j) p_j = -(z_i * (G P)_i) + (G MP)_i
    if (s.parents[0]->requires_grad) {
      Matrix dz = G * MP - Z.cwiseProduct(G * P);
      s.parents[0]->grad_buffer() += dz;
    }
    const Eigen::VectorXd gc = G.colwise().sum().transpose();  // per j
    if (s.parents[1]->requires_grad) {
      // d/dm_j = sum_i G_ij (z_i - m_j) p_j
      Matrix dm = (G.transpose() * Z).cwiseProduct(P) -
                  (M.cwiseProduct(P).array().colwise() * gc.array()).matrix();
      s.parents[1]->grad_buffer() += dm;
    }
    if (s.parents[2]->requires_grad) {
      // d/dl_j = sum_i G_ij * (-0.5 + 0.5 (z_i - m_j)^2 p_j)
      const Matrix Z2 = Z.array().square().matrix();
      Matrix sq = G.transpose() * Z2 - 2.0 * (G.transpose() * Z).cwiseProduct(M);
      sq += (M.array().square().colwise() * gc.array()).matrix();
      Matrix dl = 0.5 * sq.cwiseProduct(P);
      dl.array().colwise() -= 0.5 * gc.array();
      s.parents[2]->grad_buffer() += dl;
    }
  });
}

}  // namespace sync_edg::ad
