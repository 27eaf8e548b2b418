#include "kinmo/nn/tensor.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_set>

#include "kinmo/error.hpp"

namespace kinmo::nn {
namespace {

thread_local bool g_grad_enabled = true;

using Index = Eigen::Index;

// Creates an op node; records parents only when some parent needs a gradient.
Var make_op(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(inputs.size());
      for (auto& in : inputs) node->parents.push_back(in.node());
      node->backward = std::move(bw);
    }
  }
  return Var(std::move(node));
}

void push(Node& parent, const Matrix& g) {
  if (parent.requires_grad) parent.accumulate(g);
}

// Expands b to rows x cols when it is 1x1, 1xC or Rx1.
Matrix broadcast(const Matrix& b, Index rows, Index cols) {
  if (b.rows() == rows && b.cols() == cols) return b;
  if (b.rows() == 1 && b.cols() == 1) return Matrix::Constant(rows, cols, b(0, 0));
  if (b.rows() == 1 && b.cols() == cols) return b.replicate(rows, 1);
  if (b.cols() == 1 && b.rows() == rows) return b.replicate(1, cols);
  throw DimError("cannot broadcast " + std::to_string(b.rows()) + "x" +
                 std::to_string(b.cols()) + " to " + std::to_string(rows) + "x" +
                 std::to_string(cols));
}

Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
  Matrix y = a.value().unaryExpr(f);
  return make_op(y, {a}, [df](Node& self) {
    const Matrix& x = self.parents[0]->value;
    Matrix d(x.rows(), x.cols());
    for (Index i = 0; i < x.size(); ++i) d(i) = df(x(i), self.value(i));
    push(*self.parents[0], self.grad.cwiseProduct(d));
  });
}

void check_same(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                   std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                   std::to_string(b.cols()));
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0)
    grad = g;
  else
    grad += g;
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Var::item() const {
  if (node_->value.size() != 1) throw DimError("item() on a non-scalar");
  return node_->value(0, 0);
}

Var parameter(Matrix value) { return Var(std::move(value), true); }
Var constant(Matrix value) { return Var(std::move(value), false); }
Var scalar(double v) { return Var(Matrix::Constant(1, 1, v), false); }

void backward(const Var& output) {
  if (output.value().size() != 1) throw DimError("backward() needs a scalar output");
  if (!output.requires_grad()) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{output.node().get(), 0}};
  seen.insert(output.node().get());
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
  output.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) {
      n->backward(*n);
      // Interior gradients are no longer needed.
      n->grad.resize(0, 0);
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw DimError("matmul: inner dimensions differ");
  return make_op(a.value() * b.value(), {a, b}, [](Node& self) {
    Node& a = *self.parents[0];
    Node& b = *self.parents[1];
    if (a.requires_grad) a.accumulate(self.grad * b.value.transpose());
    if (b.requires_grad) b.accumulate(a.value.transpose() * self.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw DimError("matmul_nt: inner dimensions differ");
  return make_op(a.value() * b.value().transpose(), {a, b}, [](Node& self) {
    Node& a = *self.parents[0];
    Node& b = *self.parents[1];
    if (a.requires_grad) a.accumulate(self.grad * b.value);
    if (b.requires_grad) b.accumulate(self.grad.transpose() * a.value);
  });
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a},
                 [](Node& self) { push(*self.parents[0], self.grad.transpose()); });
}

Var add(const Var& a, const Var& b) {
  const Index r = a.rows(), c = a.cols();
  return make_op(a.value() + broadcast(b.value(), r, c), {a, b}, [](Node& self) {
    push(*self.parents[0], self.grad);
    Node& b = *self.parents[1];
    if (b.requires_grad) b.accumulate(reduce_to(self.grad, b.value.rows(), b.value.cols()));
  });
}

Var sub(const Var& a, const Var& b) {
  const Index r = a.rows(), c = a.cols();
  return make_op(a.value() - broadcast(b.value(), r, c), {a, b}, [](Node& self) {
    push(*self.parents[0], self.grad);
    Node& b = *self.parents[1];
    if (b.requires_grad) b.accumulate(-reduce_to(self.grad, b.value.rows(), b.value.cols()));
  });
}

Var mul(const Var& a, const Var& b) {
  const Index r = a.rows(), c = a.cols();
  return make_op(a.value().cwiseProduct(broadcast(b.value(), r, c)), {a, b}, [](Node& self) {
    Node& a = *self.parents[0];
    Node& b = *self.parents[1];
    const Index r = a.value.rows(), c = a.value.cols();
    if (a.requires_grad) a.accumulate(self.grad.cwiseProduct(broadcast(b.value, r, c)));
    if (b.requires_grad)
      b.accumulate(reduce_to(self.grad.cwiseProduct(a.value), b.value.rows(), b.value.cols()));
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& self) { push(*self.parents[0], self.grad * s); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
  return unary(
      a, [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sin(const Var& a) {
  return unary(a, [](double x) { return std::sin(x); },
               [](double x, double) { return std::cos(x); });
}

Var cos(const Var& a) {
  return unary(a, [](double x) { return std::cos(x); },
               [](double x, double) { return -std::sin(x); });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var gelu(const Var& a) {
  // tanh approximation
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x))); },
      [](double x, double) {
        const double u = k * (x + 0.044715 * x * x * x);
        const double t = std::tanh(u);
        const double du = k * (1.0 + 3.0 * 0.044715 * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

Var softmax_rows(const Var& a) {
  Matrix y = a.value();
  for (Index r = 0; r < y.rows(); ++r) {
    y.row(r).array() -= y.row(r).maxCoeff();
    y.row(r) = y.row(r).array().exp();
    y.row(r) /= y.row(r).sum();
  }
  return make_op(y, {a}, [](Node& self) {
    const Matrix& y = self.value;
    Matrix d = y.cwiseProduct(self.grad);
    const Eigen::VectorXd dot = d.rowwise().sum();
    d -= y.cwiseProduct(dot.replicate(1, y.cols()));
    push(*self.parents[0], d);
  });
}

Var log_softmax_rows(const Var& a) {
  Matrix y = a.value();
  for (Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    const double lse = m + std::log((y.row(r).array() - m).exp().sum());
    y.row(r).array() -= lse;
  }
  return make_op(y, {a}, [](Node& self) {
    const Matrix p = self.value.array().exp();
    const Eigen::VectorXd gsum = self.grad.rowwise().sum();
    push(*self.parents[0], self.grad - p.cwiseProduct(gsum.replicate(1, p.cols())));
  });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Matrix& xv = x.value();
  const Index n = xv.cols();
  if (gain.cols() != n || bias.cols() != n) throw DimError("layer_norm: parameter width");
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd rstd(xv.rows());
  for (Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    rstd(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * rstd(r);
  }
  Matrix y = xhat.cwiseProduct(gain.value().replicate(xv.rows(), 1));
  y.rowwise() += bias.value().row(0);
  return make_op(y, {x, gain, bias}, [xhat, rstd](Node& self) {
    Node& x = *self.parents[0];
    Node& gain = *self.parents[1];
    Node& bias = *self.parents[2];
    const Matrix& g = self.grad;
    if (gain.requires_grad) gain.accumulate(g.cwiseProduct(xhat).colwise().sum());
    if (bias.requires_grad) bias.accumulate(g.colwise().sum());
    if (x.requires_grad) {
      const Index n = xhat.cols();
      const Matrix dxhat = g.cwiseProduct(gain.value.replicate(g.rows(), 1));
      Matrix dx(g.rows(), n);
      for (Index r = 0; r < g.rows(); ++r) {
        const double s1 = dxhat.row(r).sum();
        const double s2 = dxhat.row(r).dot(xhat.row(r));
        dx.row(r) = (rstd(r) / static_cast<double>(n)) *
                    (static_cast<double>(n) * dxhat.row(r).array() - s1 -
                     xhat.row(r).array() * s2)
                        .matrix();
      }
      x.accumulate(dx);
    }
  });
}

Var normalize_rows(const Var& a) {
  const Matrix& v = a.value();
  Eigen::VectorXd norms = v.rowwise().norm();
  for (Index r = 0; r < norms.size(); ++r)
    if (!(norms(r) > 0.0)) throw ZeroNormEmbedding("row " + std::to_string(r) + " has zero norm");
  Matrix y = v.array().colwise() / norms.array();
  return make_op(y, {a}, [norms](Node& self) {
    const Matrix& y = self.value;
    const Eigen::VectorXd dots = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix d = self.grad - y.cwiseProduct(dots.replicate(1, y.cols()));
    d.array().colwise() /= norms.array();
    push(*self.parents[0], d);
  });
}

Var sum_all(const Var& a) {
  return make_op(Matrix::Constant(1, 1, a.value().sum()), {a}, [](Node& self) {
    const Node& p = *self.parents[0];
    push(*self.parents[0], Matrix::Constant(p.value.rows(), p.value.cols(), self.grad(0, 0)));
  });
}

Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_over_rows(const Var& a) {
  return make_op(a.value().colwise().sum(), {a}, [](Node& self) {
    push(*self.parents[0], self.grad.replicate(self.parents[0]->value.rows(), 1));
  });
}

Var mean_over_rows(const Var& a) {
  return scale(sum_over_rows(a), 1.0 / static_cast<double>(a.rows()));
}

Var sum_over_cols(const Var& a) {
  return make_op(a.value().rowwise().sum(), {a}, [](Node& self) {
    push(*self.parents[0], self.grad.replicate(1, self.parents[0]->value.cols()));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimError("concat_rows of nothing");
  Index rows = 0;
  const Index cols = parts[0].cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix y(rows, cols);
  Index r = 0;
  for (const auto& p : parts) {
    y.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return make_op(y, std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
    Index r = 0;
    for (auto& p : self.parents) {
      const Index n = p->value.rows();
      if (p->requires_grad) p->accumulate(self.grad.middleRows(r, n));
      r += n;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimError("concat_cols of nothing");
  Index cols = 0;
  const Index rows = parts[0].rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix y(rows, cols);
  Index c = 0;
  for (const auto& p : parts) {
    y.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return make_op(y, std::vector<Var>(parts.begin(), parts.end()), [](Node& self) {
    Index c = 0;
    for (auto& p : self.parents) {
      const Index n = p->value.cols();
      if (p->requires_grad) p->accumulate(self.grad.middleCols(c, n));
      c += n;
    }
  });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw DimError("slice_rows out of range");
  return make_op(a.value().middleRows(start, count), {a}, [start, count](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleRows(start, count) = self.grad;
    p.accumulate(g);
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw DimError("slice_cols out of range");
  return make_op(a.value().middleCols(start, count), {a}, [start, count](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    g.middleCols(start, count) = self.grad;
    p.accumulate(g);
  });
}

Var gather_rows(const Var& table, std::span<const int> indices) {
  const Matrix& t = table.value();
  Matrix y(static_cast<Index>(indices.size()), t.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= t.rows()) throw DimError("gather_rows index out of range");
    y.row(static_cast<Index>(i)) = t.row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return make_op(y, {table}, [idx = std::move(idx)](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Index>(i));
    p.accumulate(g);
  });
}

Var reshape_rows(const Var& a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) throw DimError("reshape_rows: size mismatch");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor src = a.value();
  const Matrix y = Eigen::Map<const RowMajor>(src.data(), rows, cols);
  return make_op(y, {a}, [](Node& self) {
    Node& p = *self.parents[0];
    const RowMajor g = self.grad;
    push(p, Matrix(Eigen::Map<const RowMajor>(g.data(), p.value.rows(), p.value.cols())));
  });
}

Var unfold_rows(const Var& a, int kernel, int stride, int pad_front, int pad_back) {
  const Matrix& x = a.value();
  const Index t_in = x.rows();
  const Index c = x.cols();
  const Index padded = t_in + pad_front + pad_back;
  if (padded < kernel || stride < 1) throw DimError("unfold_rows: input shorter than kernel");
  const Index t_out = (padded - kernel) / stride + 1;
  Matrix y = Matrix::Zero(t_out, kernel * c);
  for (Index o = 0; o < t_out; ++o)
    for (int k = 0; k < kernel; ++k) {
      const Index src = o * stride - pad_front + k;
      if (src >= 0 && src < t_in) y.block(o, k * c, 1, c) = x.row(src);
    }
  return make_op(y, {a}, [kernel, stride, pad_front](Node& self) {
    Node& p = *self.parents[0];
    const Index t_in = p.value.rows();
    const Index c = p.value.cols();
    Matrix g = Matrix::Zero(t_in, c);
    for (Index o = 0; o < self.grad.rows(); ++o)
      for (int k = 0; k < kernel; ++k) {
        const Index src = o * stride - pad_front + k;
        if (src >= 0 && src < t_in) g.row(src) += self.grad.block(o, k * c, 1, c);
      }
    p.accumulate(g);
  });
}

Var cumsum_rows_exclusive(const Var& a) {
  const Matrix& x = a.value();
  Matrix y = Matrix::Zero(x.rows(), x.cols());
  for (Index t = 1; t < x.rows(); ++t) y.row(t) = y.row(t - 1) + x.row(t - 1);
  return make_op(y, {a}, [](Node& self) {
    const Matrix& g = self.grad;
    Matrix d = Matrix::Zero(g.rows(), g.cols());
    // d(k) = sum_{t>k} g(t)
    for (Index k = g.rows() - 2; k >= 0; --k) d.row(k) = d.row(k + 1) + g.row(k + 1);
    push(*self.parents[0], d);
  });
}

Var cross_entropy_rows(const Var& logits, std::span<const int> targets,
                       std::span<const double> weights) {
  const Matrix& z = logits.value();
  if (static_cast<Index>(targets.size()) != z.rows())
    throw DimError("cross_entropy_rows: one target per row");
  if (!weights.empty() && weights.size() != targets.size())
    throw DimError("cross_entropy_rows: one weight per row");
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  double total = 0.0;
  for (Index r = 0; r < z.rows(); ++r) {
    const double w = weights.empty() ? 1.0 : weights[r];
    const double m = z.row(r).maxCoeff();
    const double lse = m + std::log((z.row(r).array() - m).exp().sum());
    probs.row(r) = (z.row(r).array() - lse).exp();
    if (w > 0.0) {
      if (targets[r] < 0 || targets[r] >= z.cols()) throw DimError("cross_entropy target range");
      loss += w * (lse - z(r, targets[r]));
      total += w;
    }
  }
  if (total <= 0.0) throw DimError("cross_entropy_rows: no weighted rows");
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<double> wt = weights.empty() ? std::vector<double>(tg.size(), 1.0)
                                           : std::vector<double>(weights.begin(), weights.end());
  return make_op(Matrix::Constant(1, 1, loss / total), {logits},
                 [probs = std::move(probs), tg = std::move(tg), wt = std::move(wt),
                  total](Node& self) {
                   Matrix d = Matrix::Zero(probs.rows(), probs.cols());
                   for (Index r = 0; r < probs.rows(); ++r) {
                     if (wt[r] <= 0.0) continue;
                     d.row(r) = probs.row(r) * (wt[r] / total);
                     d(r, tg[r]) -= wt[r] / total;
                   }
                   push(*self.parents[0], d * self.grad(0, 0));
                 });
}

Var smooth_l1(const Var& a, const Var& b) {
  check_same(a.value(), b.value(), "smooth_l1");
  const Matrix diff = a.value() - b.value();
  const double n = static_cast<double>(diff.size());
  const double loss =
      diff.unaryExpr([](double d) { return std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5; })
          .sum() /
      n;
  return make_op(Matrix::Constant(1, 1, loss), {a, b}, [diff, n](Node& self) {
    Matrix d = diff.unaryExpr([](double x) { return std::abs(x) < 1.0 ? x : (x > 0 ? 1.0 : -1.0); });
    d *= self.grad(0, 0) / n;
    push(*self.parents[0], d);
    push(*self.parents[1], -d);
  });
}

Var mse(const Var& a, const Var& b) {
  check_same(a.value(), b.value(), "mse");
  return mean_all(square(sub(a, b)));
}

}  // namespace kinmo::nn
