#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace kinmo::nn {

using Matrix = Eigen::MatrixXd;

// Graph node of the reverse-mode tape. `backward` reads `grad` and accumulates
// into the parents.
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

// Handle to a node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;
  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var parameter(Matrix value);
Var constant(Matrix value);
Var scalar(double v);

// Reverse sweep from a 1x1 output; gradients accumulate into leaves.
void backward(const Var& output);

// Disables tape recording on this thread while alive.
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

// --- linear algebra ---
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);

// --- elementwise; the second operand broadcasts from 1x1, 1xC or Rx1 ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var neg(const Var& a);
Var relu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var square(const Var& a);
Var gelu(const Var& a);

// --- row-wise ---
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
// Throws ZeroNormEmbedding on a zero row.
Var normalize_rows(const Var& a);

// --- reductions ---
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var sum_over_rows(const Var& a);   // 1 x C
Var mean_over_rows(const Var& a);  // 1 x C
Var sum_over_cols(const Var& a);   // R x 1

// --- shape ---
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& table, std::span<const int> indices);
// Reinterprets the row-major element order under a new shape.
Var reshape_rows(const Var& a, Eigen::Index rows, Eigen::Index cols);
// Row o holds input rows o*stride - pad + k, k < kernel, side by side;
// out-of-range rows read as zero.
Var unfold_rows(const Var& a, int kernel, int stride, int pad_front, int pad_back);
// out(t) = sum_{k<t} a(k)
Var cumsum_rows_exclusive(const Var& a);

// --- losses ---
// Mean over positions with weight > 0 of -log softmax(logits)[target].
Var cross_entropy_rows(const Var& logits, std::span<const int> targets,
                       std::span<const double> weights = {});
// Elementwise Huber with threshold 1 (0.5 d^2 inside, |d| - 0.5 outside), mean.
Var smooth_l1(const Var& a, const Var& b);
Var mse(const Var& a, const Var& b);

}  // namespace kinmo::nn
