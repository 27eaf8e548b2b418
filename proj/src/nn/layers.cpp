#include "kinmo/nn/layers.hpp"

#include <cmath>

#include "kinmo/error.hpp"

namespace kinmo::nn {

Matrix xavier(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (Eigen::Index c = 0; c < fan_out; ++c)
    for (Eigen::Index r = 0; r < fan_in; ++r) m(r, c) = rng.uniform(-a, a);
  return m;
}

Linear::Linear(int in, int out, Rng& rng)
    : weight(parameter(xavier(in, out, rng))), bias(parameter(Matrix::Zero(1, out))) {}

Linear Linear::zeros(int in, int out) {
  Linear l;
  l.weight = parameter(Matrix::Zero(in, out));
  l.bias = parameter(Matrix::Zero(1, out));
  return l;
}

void Linear::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + "weight", weight);
  f(prefix + "bias", bias);
}

LayerNorm::LayerNorm(int dim)
    : gain(parameter(Matrix::Ones(1, dim))), bias(parameter(Matrix::Zero(1, dim))) {}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + "gain", gain);
  f(prefix + "bias", bias);
}

Embedding::Embedding(int count, int dim, Rng& rng, double stddev) {
  Matrix m(count, dim);
  for (Eigen::Index c = 0; c < dim; ++c)
    for (Eigen::Index r = 0; r < count; ++r) m(r, c) = stddev * rng.normal();
  table = parameter(std::move(m));
}

void Embedding::visit(const std::string& prefix, const ParamVisitor& f) { f(prefix + "table", table); }

MultiHeadAttention::MultiHeadAttention(int dim, int heads_, Rng& rng)
    : query(dim, dim, rng), key(dim, dim, rng), value(dim, dim, rng), out(dim, dim, rng),
      heads(heads_) {
  if (heads < 1 || dim % heads != 0) throw DimError("model width must divide into heads");
}

Var MultiHeadAttention::operator()(const Var& x, const Var& context) const {
  const Var q = query(x);
  const Var k = key(context);
  const Var v = value(context);
  const Eigen::Index dim = q.cols();
  const Eigen::Index head_dim = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> per_head;
  per_head.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const Var qh = slice_cols(q, h * head_dim, head_dim);
    const Var kh = slice_cols(k, h * head_dim, head_dim);
    const Var vh = slice_cols(v, h * head_dim, head_dim);
    const Var weights = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt));
    per_head.push_back(matmul(weights, vh));
  }
  const Var joined = heads == 1 ? per_head[0] : concat_cols(per_head);
  return out(joined);
}

void MultiHeadAttention::visit(const std::string& prefix, const ParamVisitor& f) {
  query.visit(prefix + "query.", f);
  key.visit(prefix + "key.", f);
  value.visit(prefix + "value.", f);
  out.visit(prefix + "out.", f);
}

TransformerBlock::TransformerBlock(int dim, int heads, int ff_dim, Rng& rng)
    : norm1(dim), norm2(dim), attention(dim, heads, rng), ff_in(dim, ff_dim, rng),
      ff_out(ff_dim, dim, rng) {}

Var TransformerBlock::operator()(const Var& x) const {
  const Var h = norm1(x);
  const Var y = add(x, attention(h, h));
  return add(y, ff_out(gelu(ff_in(norm2(y)))));
}

void TransformerBlock::visit(const std::string& prefix, const ParamVisitor& f) {
  norm1.visit(prefix + "norm1.", f);
  attention.visit(prefix + "attention.", f);
  norm2.visit(prefix + "norm2.", f);
  ff_in.visit(prefix + "ff_in.", f);
  ff_out.visit(prefix + "ff_out.", f);
}

Conv1d::Conv1d(int in, int out, int kernel_, int stride_, int pad_front_, int pad_back_, Rng& rng)
    : projection(in * kernel_, out, rng), kernel(kernel_), stride(stride_),
      pad_front(pad_front_), pad_back(pad_back_) {}

Var Conv1d::operator()(const Var& x) const {
  return projection(unfold_rows(x, kernel, stride, pad_front, pad_back));
}

void Conv1d::visit(const std::string& prefix, const ParamVisitor& f) {
  projection.visit(prefix, f);
}

Matrix sinusoidal_positions(int rows, int dim) {
  Matrix m(rows, dim);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < dim; ++c) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (c / 2)) / dim);
      m(r, c) = c % 2 == 0 ? std::sin(r * freq) : std::cos(r * freq);
    }
  return m;
}

Adam::Adam(std::vector<Var> params, Options options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double Adam::step() {
  double norm2 = 0.0;
  for (const auto& p : params_)
    if (p.has_grad()) norm2 += p.grad().squaredNorm();
  const double norm = std::sqrt(norm2);
  const double clip =
      options_.clip_norm > 0.0 && norm > options_.clip_norm ? options_.clip_norm / norm : 1.0;
  ++steps_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    if (!p.has_grad()) continue;
    const Matrix g = p.grad() * clip;
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
    Matrix update = (m_[i] / bc1).array() / ((v_[i] / bc2).array().sqrt() + options_.epsilon);
    if (options_.weight_decay > 0.0) update += options_.weight_decay * p.value();
    p.mutable_value() -= options_.learning_rate * update;
  }
  return norm;
}

}  // namespace kinmo::nn
