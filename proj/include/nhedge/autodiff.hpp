#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every tensor is two-dimensional (rows x cols); a batch of
// token sequences is stored as consecutive groups of rows.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

namespace nhedge::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Node {
  Matrix value;
  Matrix grad;  // empty until the backward pass reaches this node
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  std::uint64_t id = 0;
  bool requires_grad = false;

  // Adds g into grad, allocating zeros on first use.
  void accumulate(Matrix g);
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  static Tensor parameter(Matrix value);
  static Tensor scalar(double value);
  static Tensor column(std::span<const double> values);

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  std::array<Index, 2> shape() const { return {rows(), cols()}; }
  Index size() const { return node_->value.size(); }

  const Matrix& value() const { return node_->value; }
  // Direct access for optimizers; never call while a graph using this
  // tensor is awaiting backward.
  Matrix& mutable_value() { return node_->value; }

  bool has_grad() const { return node_->grad.size() != 0; }
  // Gradient, or zeros of the value's shape when nothing reached this tensor.
  Matrix grad() const;
  void zero_grad() { node_->grad.resize(0, 0); }

  double item() const;
  bool requires_grad() const { return node_->requires_grad; }
  std::uint64_t id() const { return node_->id; }
  bool defined() const { return static_cast<bool>(node_); }

  Tensor detach() const { return constant(node_->value); }

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Reverse pass from a 1x1 loss. Leaf parameters accumulate into their
// grad slot; intermediate gradients are released afterwards.
void backward(const Tensor& loss);

// Elementwise arithmetic. Shapes broadcast when a dimension is 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double f) { return scale(a, f); }
inline Tensor operator*(double f, const Tensor& a) { return scale(a, f); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

Tensor matmul(const Tensor& a, const Tensor& b);
// input [N, d_in] x weight [d_in, d_out] + bias [1, d_out] (or [d_out, 1]).
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& a);
Tensor abs_value(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // throws DomainError on non-positive entries
Tensor maximum(const Tensor& a, double floor);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor row_sum(const Tensor& a);  // [r, c] -> [r, 1]

Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, Index start, Index count);
Tensor reshape(const Tensor& a, Index rows, Index cols);
// [r, m] -> [r, width] with source column i written to target_cols[i].
Tensor place_columns(const Tensor& a, Index width, std::span<const Index> target_cols);
Tensor select_rows(const Tensor& a, std::span<const Index> rows);

// Row indices of the k smallest entries of a column tensor; ties go to
// the lower index. Not recorded on the tape.
std::vector<Index> k_smallest_rows(const Matrix& column, Index k);
// Mean of the k smallest entries, differentiable through those entries only.
Tensor k_worst_mean(const Tensor& column, Index k);

Tensor layer_norm(const Tensor& input, const Tensor& gain, const Tensor& shift,
                  double epsilon = 1e-5);

// Single-head scaled dot-product attention applied independently to each
// group of `group` consecutive rows.
Tensor attention(const Tensor& query, const Tensor& key, const Tensor& value, Index group);
// Softmax weights of the attention above, [rows, group]; row r holds the
// weights of token r over the tokens in its group.
Matrix attention_weights(const Matrix& query, const Matrix& key, Index group);

// Mean over each group of `group` consecutive rows: [g*n, c] -> [n, c].
Tensor group_mean(const Tensor& a, Index group);

}  // namespace nhedge::ad
