#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "kinmo/nn/tensor.hpp"
#include "kinmo/rng.hpp"

namespace kinmo::nn {

// Visitor over a module's named parameters. Modules expose
// `void visit(const std::string& prefix, const ParamVisitor&)`.
using ParamVisitor = std::function<void(const std::string& name, Var& param)>;
using NamedParams = std::vector<std::pair<std::string, Var>>;

template <class M>
NamedParams named_parameters(M& module, const std::string& prefix = "") {
  NamedParams out;
  module.visit(prefix, [&](const std::string& name, Var& v) { out.emplace_back(name, v); });
  return out;
}

template <class M>
std::vector<Var> parameters(M& module) {
  std::vector<Var> out;
  module.visit("", [&](const std::string&, Var& v) { out.push_back(v); });
  return out;
}

// Copy with freshly allocated parameter nodes holding the same values.
template <class M>
M deep_copy(const M& module) {
  M copy = module;
  copy.visit("", [](const std::string&, Var& v) { v = Var(v.value(), v.requires_grad()); });
  return copy;
}

template <class M>
void set_trainable(M& module, bool trainable) {
  module.visit("", [&](const std::string&, Var& v) { v.node()->requires_grad = trainable; });
}

// FNV-1a over the raw bytes of every parameter, in visit order.
template <class M>
std::uint64_t parameter_checksum(M& module) {
  std::uint64_t h = 1469598103934665603ULL;
  module.visit("", [&](const std::string&, Var& v) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.value().data());
    for (Eigen::Index i = 0; i < v.value().size() * static_cast<Eigen::Index>(sizeof(double)); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  });
  return h;
}

Matrix xavier(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

struct Linear {
  Var weight;  // in x out
  Var bias;    // 1 x out

  Linear() = default;
  Linear(int in, int out, Rng& rng);
  static Linear zeros(int in, int out);

  Var operator()(const Var& x) const { return add(matmul(x, weight), bias); }
  void visit(const std::string& prefix, const ParamVisitor& f);
};

struct LayerNorm {
  Var gain;
  Var bias;

  LayerNorm() = default;
  explicit LayerNorm(int dim);
  Var operator()(const Var& x) const { return layer_norm_rows(x, gain, bias); }
  void visit(const std::string& prefix, const ParamVisitor& f);
};

struct Embedding {
  Var table;

  Embedding() = default;
  Embedding(int count, int dim, Rng& rng, double stddev = 0.02);
  Var operator()(std::span<const int> ids) const { return gather_rows(table, ids); }
  void visit(const std::string& prefix, const ParamVisitor& f);
};

struct MultiHeadAttention {
  Linear query, key, value, out;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(int dim, int heads, Rng& rng);
  // Queries from x attend over context rows.
  Var operator()(const Var& x, const Var& context) const;
  void visit(const std::string& prefix, const ParamVisitor& f);
};

// Pre-norm encoder block: x + attn(ln(x)), then x + ffn(ln(x)).
struct TransformerBlock {
  LayerNorm norm1, norm2;
  MultiHeadAttention attention;
  Linear ff_in, ff_out;

  TransformerBlock() = default;
  TransformerBlock(int dim, int heads, int ff_dim, Rng& rng);
  Var operator()(const Var& x) const;
  void visit(const std::string& prefix, const ParamVisitor& f);
};

// Temporal convolution over rows (frames), channels in columns.
struct Conv1d {
  Linear projection;
  int kernel = 1;
  int stride = 1;
  int pad_front = 0;
  int pad_back = 0;

  Conv1d() = default;
  Conv1d(int in, int out, int kernel, int stride, int pad_front, int pad_back, Rng& rng);
  Var operator()(const Var& x) const;
  void visit(const std::string& prefix, const ParamVisitor& f);
};

// Fixed sinusoidal position table, rows x dim.
Matrix sinusoidal_positions(int rows, int dim);

class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 1.0;  // <= 0 disables clipping
  };

  Adam(std::vector<Var> params, Options options);
  void zero_grad();
  // Returns the pre-clipping gradient norm.
  double step();
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

 private:
  std::vector<Var> params_;
  Options options_;
  std::vector<Matrix> m_, v_;
  long steps_ = 0;
};

}  // namespace kinmo::nn
