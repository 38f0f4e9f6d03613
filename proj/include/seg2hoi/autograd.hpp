#pragma once

// Tape-based reverse-mode differentiation over dense double matrices. A Tape
// records every operation of one forward pass; Tape::backward walks it in
// reverse and accumulates gradients into the nodes that require them.

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace seg2hoi::ag {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

class Tape;

class Var {
 public:
  Var() = default;

  bool defined() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Called with the tape and the id of the node being differentiated.
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  /// Records a computed node. `backward` runs only if some input requires grad.
  Var record(Matrix value, bool requires_grad, BackwardFn backward);

  const Matrix& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
  /// Gradient buffer of a node, zero-initialized on first access.
  Matrix& grad(int id);
  /// Gradient of a node after backward(); an empty matrix when nothing flowed in.
  const Matrix& grad_or_empty(int id) const { return nodes_[static_cast<size_t>(id)].grad; }

  void backward(const Var& root);
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Arithmetic.
Var matmul(const Var& a, const Var& b);
/// a * b^T.
Var matmul_nt(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var cwise_max(const Var& a, const Var& b);
Var cwise_min(const Var& a, const Var& b);
Var abs(const Var& a);

// Activations.
Var relu(const Var& a);
Var sigmoid(const Var& a);

// Shape manipulation.
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& a, const std::vector<int>& rows);
/// out(i, k) = a(rows[i], cols[i][k]); every cols[i] must have the same length.
Var gather_points(const Var& a, const std::vector<int>& rows,
                  const std::vector<std::vector<int>>& cols);

// Reductions and normalization.
Var sum(const Var& a);
/// Row-wise softmax over the columns marked valid; rows with no valid column are zero.
Var masked_softmax_rows(const Var& a, const std::vector<bool>& col_valid);
/// Each row divided by max(||row||, eps).
Var normalize_rows(const Var& a, double eps = 1e-12);

// Fused losses, each returning a 1x1 node.
/// Sigmoid focal loss summed over the rows selected by `row_mask` and all columns.
Var sigmoid_focal_sum(const Var& logits, const Matrix& targets, const std::vector<bool>& row_mask,
                      double alpha, double gamma);
/// Class-weighted softmax cross-entropy, sum(w_i * ce_i) / sum(w_i); label -1 skips a row.
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels,
                          const std::vector<double>& class_weights);
/// Sum over rows of the mean binary cross-entropy with logits.
Var bce_rows_sum(const Var& logits, const Matrix& targets);
/// Sum over rows of 1 - (2 sum(p t) + 1) / (sum(p) + sum(t) + 1), p = sigmoid(logits).
Var dice_rows_sum(const Var& logits, const Matrix& targets);

}  // namespace seg2hoi::ag
