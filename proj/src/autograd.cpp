#include "seg2hoi/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace seg2hoi::ag {

const Matrix& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::backward(const Var& root) {
  if (root.tape_ != this) throw std::invalid_argument("backward root belongs to another tape");
  if (root.value().size() != 1) throw std::invalid_argument("backward root must be a scalar");
  if (!requires_grad(root.id())) return;
  grad(root.id()).setOnes();
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
}

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands live on different tapes");
  return a.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename Expr>
void accumulate(Tape& t, int id, const Expr& expr) {
  if (t.requires_grad(id)) t.grad(id) += expr;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value(), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& t, int self) {
                    const Matrix& g = t.grad(self);
                    accumulate(t, ia, g * t.value(ib).transpose());
                    accumulate(t, ib, t.value(ia).transpose() * g);
                  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() * b.value().transpose(), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& t, int self) {
                    const Matrix& g = t.grad(self);
                    accumulate(t, ia, g * t.value(ib));
                    accumulate(t, ib, g.transpose() * t.value(ia));
                  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& t, int self) {
                    const Matrix& g = t.grad(self);
                    accumulate(t, ia, g);
                    accumulate(t, ib, g);
                  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& t, int self) {
                    const Matrix& g = t.grad(self);
                    accumulate(t, ia, g);
                    accumulate(t, ib, -g);
                  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "mul");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& t, int self) {
                    const Matrix& g = t.grad(self);
                    accumulate(t, ia, g.cwiseProduct(t.value(ib)));
                    accumulate(t, ib, g.cwiseProduct(t.value(ia)));
                  });
}

Var div(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "div");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseQuotient(b.value()), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& t, int self) {
                    const Matrix& g = t.grad(self);
                    const Matrix& bv = t.value(ib);
                    accumulate(t, ia, g.cwiseQuotient(bv));
                    accumulate(t, ib,
                               -g.cwiseProduct(t.value(self)).cwiseQuotient(bv));
                  });
}

Var add_row(const Var& a, const Var& row) {
  Tape& t = same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: bad row shape");
  const int ia = a.id(), ir = row.id();
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  return t.record(std::move(v), a.requires_grad() || row.requires_grad(),
                  [ia, ir](Tape& t, int self) {
                    const Matrix& g = t.grad(self);
                    accumulate(t, ia, g);
                    accumulate(t, ir, g.colwise().sum());
                  });
}

Var scale(const Var& a, double s) {
  const int ia = a.id();
  return a.tape().record(a.value() * s, a.requires_grad(),
                         [ia, s](Tape& t, int self) { accumulate(t, ia, t.grad(self) * s); });
}

Var add_scalar(const Var& a, double s) {
  const int ia = a.id();
  return a.tape().record(a.value().array() + s, a.requires_grad(),
                         [ia](Tape& t, int self) { accumulate(t, ia, t.grad(self)); });
}

Var cwise_max(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "cwise_max");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseMax(b.value()), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& t, int self) {
                    const Matrix& g = t.grad(self);
                    const auto pick_a = (t.value(ia).array() >= t.value(ib).array());
                    accumulate(t, ia, pick_a.select(g.array(), 0.0).matrix());
                    accumulate(t, ib, pick_a.select(0.0, g.array()).matrix());
                  });
}

Var cwise_min(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a, b, "cwise_min");
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseMin(b.value()), a.requires_grad() || b.requires_grad(),
                  [ia, ib](Tape& t, int self) {
                    const Matrix& g = t.grad(self);
                    const auto pick_a = (t.value(ia).array() <= t.value(ib).array());
                    accumulate(t, ia, pick_a.select(g.array(), 0.0).matrix());
                    accumulate(t, ib, pick_a.select(0.0, g.array()).matrix());
                  });
}

Var abs(const Var& a) {
  const int ia = a.id();
  return a.tape().record(a.value().cwiseAbs(), a.requires_grad(), [ia](Tape& t, int self) {
    const Matrix& x = t.value(ia);
    accumulate(t, ia, t.grad(self).cwiseProduct(x.unaryExpr([](double v) {
      return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
    })));
  });
}

Var relu(const Var& a) {
  const int ia = a.id();
  return a.tape().record(a.value().cwiseMax(0.0), a.requires_grad(), [ia](Tape& t, int self) {
    accumulate(t, ia, (t.value(ia).array() > 0.0).select(t.grad(self).array(), 0.0).matrix());
  });
}

Var sigmoid(const Var& a) {
  const int ia = a.id();
  return a.tape().record(a.value().unaryExpr(&stable_sigmoid), a.requires_grad(),
                         [ia](Tape& t, int self) {
                           const Matrix& y = t.value(self);
                           accumulate(t, ia,
                                      t.grad(self).cwiseProduct(
                                          y.cwiseProduct((1.0 - y.array()).matrix())));
                         });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  Tape& t = parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool rg = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    if (&p.tape() != &t || p.rows() != rows) throw std::invalid_argument("concat_cols: mismatch");
    cols += p.cols();
    rg = rg || p.requires_grad();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return t.record(std::move(v), rg, [ids, widths](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Eigen::Index at = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      accumulate(t, ids[i], g.middleCols(at, widths[i]));
      at += widths[i];
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  Tape& t = parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool rg = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> heights;
  for (const Var& p : parts) {
    if (&p.tape() != &t || p.cols() != cols) throw std::invalid_argument("concat_rows: mismatch");
    rows += p.rows();
    rg = rg || p.requires_grad();
    ids.push_back(p.id());
    heights.push_back(p.rows());
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return t.record(std::move(v), rg, [ids, heights](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Eigen::Index at = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      accumulate(t, ids[i], g.middleRows(at, heights[i]));
      at += heights[i];
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols");
  const int ia = a.id();
  return a.tape().record(a.value().middleCols(start, count), a.requires_grad(),
                         [ia, start, count](Tape& t, int self) {
                           t.grad(ia).middleCols(start, count) += t.grad(self);
                         });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows");
  const int ia = a.id();
  return a.tape().record(a.value().middleRows(start, count), a.requires_grad(),
                         [ia, start, count](Tape& t, int self) {
                           t.grad(ia).middleRows(start, count) += t.grad(self);
                         });
}

Var gather_rows(const Var& a, const std::vector<int>& rows) {
  Matrix v(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) throw std::out_of_range("gather_rows");
    v.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  const int ia = a.id();
  return a.tape().record(std::move(v), a.requires_grad(), [ia, rows](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (size_t i = 0; i < rows.size(); ++i) ga.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var gather_points(const Var& a, const std::vector<int>& rows,
                  const std::vector<std::vector<int>>& cols) {
  if (rows.size() != cols.size()) throw std::invalid_argument("gather_points: rows/cols mismatch");
  const Eigen::Index k = cols.empty() ? 0 : static_cast<Eigen::Index>(cols.front().size());
  Matrix v(static_cast<Eigen::Index>(rows.size()), k);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Eigen::Index>(cols[i].size()) != k) {
      throw std::invalid_argument("gather_points: ragged columns");
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      v(static_cast<Eigen::Index>(i), j) = a.value()(rows[i], cols[i][static_cast<size_t>(j)]);
    }
  }
  const int ia = a.id();
  return a.tape().record(std::move(v), a.requires_grad(), [ia, rows, cols](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(ia);
    for (size_t i = 0; i < rows.size(); ++i) {
      for (size_t j = 0; j < cols[i].size(); ++j) {
        ga(rows[i], cols[i][j]) += g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
  });
}

Var sum(const Var& a) {
  const int ia = a.id();
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return a.tape().record(std::move(v), a.requires_grad(), [ia](Tape& t, int self) {
    const double g = t.grad(self)(0, 0);
    t.grad(ia).array() += g;
  });
}

Var masked_softmax_rows(const Var& a, const std::vector<bool>& col_valid) {
  if (static_cast<Eigen::Index>(col_valid.size()) != a.cols()) {
    throw std::invalid_argument("masked_softmax_rows: mask size mismatch");
  }
  const Matrix& x = a.value();
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (col_valid[static_cast<size_t>(c)]) mx = std::max(mx, x(r, c));
    }
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (!col_valid[static_cast<size_t>(c)]) continue;
      y(r, c) = std::exp(x(r, c) - mx);
      z += y(r, c);
    }
    y.row(r) /= z;
  }
  const int ia = a.id();
  return a.tape().record(std::move(y), a.requires_grad(), [ia](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    const Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.cwiseProduct(g);
    dx -= y.cwiseProduct(dot.replicate(1, y.cols()));
    t.grad(ia) += dx;
  });
}

Var normalize_rows(const Var& a, double eps) {
  const Matrix& x = a.value();
  Eigen::VectorXd norms = x.rowwise().norm().cwiseMax(eps);
  Matrix y = x.array().colwise() / norms.array();
  const int ia = a.id();
  return a.tape().record(std::move(y), a.requires_grad(), [ia, norms, eps](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    const Matrix& x = t.value(ia);
    Matrix& ga = t.grad(ia);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      if (x.row(r).norm() > eps) {
        ga.row(r) += (g.row(r) - y.row(r) * y.row(r).dot(g.row(r))) / norms(r);
      } else {
        ga.row(r) += g.row(r) / eps;
      }
    }
  });
}

Var sigmoid_focal_sum(const Var& logits, const Matrix& targets, const std::vector<bool>& row_mask,
                      double alpha, double gamma) {
  const Matrix& x = logits.value();
  if (targets.rows() != x.rows() || targets.cols() != x.cols() ||
      static_cast<Eigen::Index>(row_mask.size()) != x.rows()) {
    throw std::invalid_argument("sigmoid_focal_sum: shape mismatch");
  }
  double total = 0.0;
  Matrix dx = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (!row_mask[static_cast<size_t>(r)]) continue;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double z = x(r, c);
      const double tv = targets(r, c);
      const double p = stable_sigmoid(z);
      const double ce = softplus(z) - tv * z;
      const double pt = p * tv + (1.0 - p) * (1.0 - tv);
      const double at = alpha * tv + (1.0 - alpha) * (1.0 - tv);
      const double mod = std::pow(1.0 - pt, gamma);
      total += at * mod * ce;
      const double dpt = (2.0 * tv - 1.0) * p * (1.0 - p);
      const double dmod = gamma > 0.0 ? -gamma * std::pow(1.0 - pt, gamma - 1.0) * dpt : 0.0;
      dx(r, c) = at * (dmod * ce + mod * (p - tv));
    }
  }
  Matrix v(1, 1);
  v(0, 0) = total;
  const int ia = logits.id();
  return logits.tape().record(std::move(v), logits.requires_grad(),
                              [ia, dx = std::move(dx)](Tape& t, int self) {
                                t.grad(ia) += dx * t.grad(self)(0, 0);
                              });
}

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels,
                          const std::vector<double>& class_weights) {
  const Matrix& x = logits.value();
  if (static_cast<Eigen::Index>(labels.size()) != x.rows() ||
      static_cast<Eigen::Index>(class_weights.size()) != x.cols()) {
    throw std::invalid_argument("softmax_cross_entropy: shape mismatch");
  }
  double weighted = 0.0;
  double weight_sum = 0.0;
  Matrix dx = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const int y = labels[static_cast<size_t>(r)];
    if (y < 0) continue;
    if (y >= x.cols()) throw std::out_of_range("softmax_cross_entropy: label out of range");
    const double w = class_weights[static_cast<size_t>(y)];
    const double mx = x.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (x.row(r).array() - mx).exp();
    const double z = e.sum();
    weighted += w * (std::log(z) + mx - x(r, y));
    weight_sum += w;
    dx.row(r) = w * e / z;
    dx(r, y) -= w;
  }
  Matrix v = Matrix::Zero(1, 1);
  if (weight_sum > 0.0) {
    v(0, 0) = weighted / weight_sum;
    dx /= weight_sum;
  }
  const int ia = logits.id();
  return logits.tape().record(std::move(v), logits.requires_grad(),
                              [ia, dx = std::move(dx)](Tape& t, int self) {
                                t.grad(ia) += dx * t.grad(self)(0, 0);
                              });
}

Var bce_rows_sum(const Var& logits, const Matrix& targets) {
  const Matrix& x = logits.value();
  if (targets.rows() != x.rows() || targets.cols() != x.cols()) {
    throw std::invalid_argument("bce_rows_sum: shape mismatch");
  }
  const double k = static_cast<double>(std::max<Eigen::Index>(1, x.cols()));
  double total = 0.0;
  Matrix dx(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      total += (softplus(x(r, c)) - targets(r, c) * x(r, c)) / k;
      dx(r, c) = (stable_sigmoid(x(r, c)) - targets(r, c)) / k;
    }
  }
  Matrix v(1, 1);
  v(0, 0) = total;
  const int ia = logits.id();
  return logits.tape().record(std::move(v), logits.requires_grad(),
                              [ia, dx = std::move(dx)](Tape& t, int self) {
                                t.grad(ia) += dx * t.grad(self)(0, 0);
                              });
}

Var dice_rows_sum(const Var& logits, const Matrix& targets) {
  const Matrix& x = logits.value();
  if (targets.rows() != x.rows() || targets.cols() != x.cols()) {
    throw std::invalid_argument("dice_rows_sum: shape mismatch");
  }
  const Matrix p = x.unaryExpr(&stable_sigmoid);
  double total = 0.0;
  Matrix dx(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double inter = p.row(r).dot(targets.row(r));
    const double denom = p.row(r).sum() + targets.row(r).sum() + 1.0;
    const double numer = 2.0 * inter + 1.0;
    total += 1.0 - numer / denom;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double dp = -(2.0 * targets(r, c) * denom - numer) / (denom * denom);
      dx(r, c) = dp * p(r, c) * (1.0 - p(r, c));
    }
  }
  Matrix v(1, 1);
  v(0, 0) = total;
  const int ia = logits.id();
  return logits.tape().record(std::move(v), logits.requires_grad(),
                              [ia, dx = std::move(dx)](Tape& t, int self) {
                                t.grad(ia) += dx * t.grad(self)(0, 0);
                              });
}

}  // namespace seg2hoi::ag
