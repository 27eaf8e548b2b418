#include "kinmo/rqvae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "kinmo/error.hpp"

namespace kinmo {

using nn::Matrix;
using nn::Var;

RqvaeConfig RqvaeConfig::from(const Config& c) {
  RqvaeConfig r;
  r.layers = c.get("rqvae.layers", r.layers);
  r.codebook_size = c.get("rqvae.codebook_size", r.codebook_size);
  r.code_dim = c.get("rqvae.code_dim", r.code_dim);
  r.downsample = c.get("rqvae.downsample", r.downsample);
  r.hidden = c.get("rqvae.hidden", r.hidden);
  r.epochs = c.get("rqvae.epochs", r.epochs);
  r.batch_size = c.get("rqvae.batch_size", r.batch_size);
  r.learning_rate = c.get("rqvae.learning_rate", r.learning_rate);
  r.commitment = c.get("rqvae.commitment", r.commitment);
  r.quantizer_dropout = c.get("rqvae.quantizer_dropout", r.quantizer_dropout);
  r.kmeans_iterations = c.get("rqvae.kmeans_iterations", r.kmeans_iterations);
  r.ema_decay = c.get("rqvae.ema_decay", r.ema_decay);
  if (r.layers < 1 || r.codebook_size < 2 || r.code_dim < 1 || r.downsample < 1 || r.hidden < 1)
    throw ConfigError("rqvae sizes must be positive (codebook_size >= 2)");
  if (r.epochs < 0 || r.batch_size < 1 || r.kmeans_iterations < 0)
    throw ConfigError("rqvae.epochs/batch_size/kmeans_iterations out of range");
  if (!(r.learning_rate > 0.0) || r.commitment < 0.0 || r.quantizer_dropout < 0.0 || r.quantizer_dropout > 1.0 ||
      r.ema_decay < 0.0 || r.ema_decay >= 1.0)
    throw ConfigError("rqvae optimizer settings out of range");
  return r;
}

Config RqvaeConfig::to_config() const {
  Config c;
  c.set("rqvae.layers", layers);
  c.set("rqvae.codebook_size", codebook_size);
  c.set("rqvae.code_dim", code_dim);
  c.set("rqvae.downsample", downsample);
  c.set("rqvae.hidden", hidden);
  c.set("rqvae.epochs", epochs);
  c.set("rqvae.batch_size", batch_size);
  c.set("rqvae.learning_rate", learning_rate);
  c.set("rqvae.commitment", commitment);
  c.set("rqvae.quantizer_dropout", quantizer_dropout);
  c.set("rqvae.kmeans_iterations", kmeans_iterations);
  c.set("rqvae.ema_decay", ema_decay);
  return c;
}

std::set<std::string> RqvaeConfig::keys() {
  std::set<std::string> out;
  const Config defaults = RqvaeConfig{}.to_config();
  for (const auto& [k, v] : defaults.entries()) out.insert(k);
  return out;
}

int token_length(int frames, int downsample) {
  if (frames < 1 || downsample < 1) throw InvalidMotion("token_length: frames and downsample must be positive");
  return (frames + downsample - 1) / downsample;
}

void MotionTokenGrid::validate(int codebook_size) const {
  if (tokens.rows() < 1 || tokens.cols() < 1) throw InvalidMotion("token grid is empty");
  if (frames < 1 || token_length(frames, downsample) != tokens.rows())
    throw InvalidMotion("token grid length " + std::to_string(tokens.rows()) + " does not match " +
                        std::to_string(frames) + " frames at downsample " + std::to_string(downsample));
  if (tokens.minCoeff() < 0 || tokens.maxCoeff() >= codebook_size)
    throw InvalidMotion("token index outside [0, " + std::to_string(codebook_size) + ")");
}

// ---- codebooks ----

ResidualCodebooks::ResidualCodebooks(const std::vector<Matrix>& codes) {
  if (codes.empty()) throw DimError("codebooks need at least one layer");
  for (const auto& c : codes) {
    if (c.rows() < 1 || c.cols() < 1 || c.rows() != codes[0].rows() || c.cols() != codes[0].cols())
      throw DimError("codebook layers must share a non-empty K x d shape");
    codes_.push_back(nn::parameter(c));
  }
}

Quantization ResidualCodebooks::quantize(const Matrix& z, int use_layers) const {
  if (codes_.empty()) throw NotFitted("codebooks are empty");
  const int n_layers = use_layers < 0 ? layers() : std::min(use_layers, layers());
  if (z.cols() != code_dim()) throw DimError("quantize: width does not match code_dim");
  Quantization q{Eigen::MatrixXi::Zero(z.rows(), n_layers), Matrix::Zero(z.rows(), z.cols())};
  Matrix residual = z;
  for (int l = 0; l < n_layers; ++l) {
    const Matrix& book = codes(l);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < book.rows(); ++k) {
        const double d = (book.row(k) - residual.row(i)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(k);
        }
      }
      q.tokens(i, l) = best;
      residual.row(i) -= book.row(best);
      q.quantized.row(i) += book.row(best);
    }
  }
  return q;
}

Matrix ResidualCodebooks::lookup(const Eigen::MatrixXi& tokens, int use_layers) const {
  if (codes_.empty()) throw NotFitted("codebooks are empty");
  const int n_layers = use_layers < 0 ? static_cast<int>(tokens.cols()) : use_layers;
  if (n_layers > tokens.cols() || n_layers > layers()) throw DimError("lookup: more layers than available");
  Matrix out = Matrix::Zero(tokens.rows(), code_dim());
  for (int l = 0; l < n_layers; ++l)
    for (Eigen::Index i = 0; i < tokens.rows(); ++i) {
      const int k = tokens(i, l);
      if (k < 0 || k >= codebook_size()) throw InvalidMotion("token index out of range");
      out.row(i) += codes(l).row(k);
    }
  return out;
}

Var ResidualCodebooks::lookup_var(const Eigen::MatrixXi& tokens, int use_layers) const {
  const int n_layers = use_layers < 0 ? static_cast<int>(tokens.cols()) : use_layers;
  if (n_layers < 1 || n_layers > tokens.cols() || n_layers > layers())
    throw DimError("lookup_var: layer count out of range");
  Var out;
  for (int l = 0; l < n_layers; ++l) {
    std::vector<int> ids(static_cast<std::size_t>(tokens.rows()));
    for (Eigen::Index i = 0; i < tokens.rows(); ++i) ids[static_cast<std::size_t>(i)] = tokens(i, l);
    const Var part = nn::gather_rows(code_var(l), ids);
    out = l == 0 ? part : nn::add(out, part);
  }
  return out;
}

void ResidualCodebooks::validate() const {
  for (int l = 0; l < layers(); ++l) {
    const Matrix& book = codes(l);
    if (!book.allFinite()) throw InvalidMotion("codebook layer " + std::to_string(l) + " has non-finite entries");
    for (Eigen::Index a = 0; a < book.rows(); ++a)
      for (Eigen::Index b = a + 1; b < book.rows(); ++b)
        if (book.row(a) == book.row(b))
          throw InvalidMotion("codebook layer " + std::to_string(l) + " repeats code " + std::to_string(a));
  }
}

void ResidualCodebooks::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  for (std::size_t l = 0; l < codes_.size(); ++l) f(prefix + "layer" + std::to_string(l), codes_[l]);
}

Matrix kmeans(const Matrix& points, int k, int iterations, Rng& rng) {
  const Eigen::Index n = points.rows();
  if (n < 1 || k < 1) throw DimError("kmeans: need points and k >= 1");
  const Eigen::Index d = points.cols();
  double spread = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) spread += (points.row(i) - points.colwise().mean()).squaredNorm();
  spread = std::sqrt(spread / static_cast<double>(n * d));
  if (!(spread > 0.0)) spread = 1.0;
  // Points this close to a center count as covered; float32 storage would merge them.
  const double tol = 1e-10 * spread * spread * static_cast<double>(d);
  Matrix centers(k, d);
  // k-means++ seeding
  centers.row(0) = points.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n))));
  Eigen::VectorXd dist = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  int filled = 1;
  for (; filled < k; ++filled) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (dist(i) > tol) total += dist(i);
    if (!(total > 0.0)) break;  // every point already covered
    double pick = rng.uniform() * total;
    Eigen::Index chosen = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (dist(i) <= tol) continue;
      chosen = i;  // rounding can leave pick >= 0; fall back to the last candidate
      pick -= dist(i);
      if (pick < 0.0) break;
    }
    centers.row(filled) = points.row(chosen);
    dist = dist.cwiseMin((points.rowwise() - centers.row(filled)).rowwise().squaredNorm());
  }
  const int seeded = filled;
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < iterations; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      (centers.topRows(seeded).rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&assign[i]);
    }
    Matrix sums = Matrix::Zero(seeded, d);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(seeded);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += points.row(i);
      counts(assign[i]) += 1.0;
    }
    for (int c = 0; c < seeded; ++c)
      if (counts(c) > 0) centers.row(c) = sums.row(c) / counts(c);
  }
  // Fewer distinct points than k: jitter copies of existing centers.
  auto jitter = [&](int c) {
    for (Eigen::Index j = 0; j < d; ++j) centers(c, j) += 0.05 * spread * rng.normal();
  };
  for (int c = seeded; c < k; ++c) {
    centers.row(c) = centers.row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(seeded))));
    jitter(c);
  }
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      if ((centers.row(a) - centers.row(b)).squaredNorm() <= tol) jitter(b);
  return centers;
}

// ---- model ----

RqvaeModel::RqvaeModel(const RqvaeConfig& config, FeatureNormalizer normalizer, Rng& rng)
    : config_(config), normalizer_(std::move(normalizer)) {
  const int h = config.hidden;
  const int r = config.downsample;
  enc_in_ = nn::Conv1d(layout::kFeatureDim, h, 3, 1, 1, 1, rng);
  enc_down_ = nn::Conv1d(h, h, r, r, 0, 0, rng);
  enc_mid_ = nn::Conv1d(h, h, 3, 1, 1, 1, rng);
  enc_out_ = nn::Linear(h, config.code_dim, rng);
  dec_in_ = nn::Linear(config.code_dim, h, rng);
  dec_mid_ = nn::Conv1d(h, h, 3, 1, 1, 1, rng);
  dec_up_ = nn::Linear(h, r * h, rng);
  dec_smooth_ = nn::Conv1d(h, h, 3, 1, 1, 1, rng);
  dec_out_ = nn::Linear(h, layout::kFeatureDim, rng);
  std::vector<Matrix> books;
  for (int l = 0; l < config.layers; ++l)
    books.push_back(Matrix::Zero(config.codebook_size, config.code_dim));
  codebooks_ = ResidualCodebooks(books);
}

void RqvaeModel::require_fitted() const {
  if (!fitted_) throw NotFitted("RQ-VAE codebooks are untrained");
}

Var RqvaeModel::encode_latent(const Matrix& normalized) const {
  if (normalized.cols() != layout::kFeatureDim || normalized.rows() < 1)
    throw DimError("rqvae encoder expects T x 263 features");
  const int frames = static_cast<int>(normalized.rows());
  const int padded = token_length(frames, config_.downsample) * config_.downsample;
  Matrix x(padded, layout::kFeatureDim);
  x.topRows(frames) = normalized;
  for (int t = frames; t < padded; ++t) x.row(t) = normalized.row(frames - 1);
  Var h = nn::relu(enc_in_(nn::constant(std::move(x))));
  h = nn::relu(enc_down_(h));
  h = nn::add(h, nn::relu(enc_mid_(h)));
  return enc_out_(h);
}

Var RqvaeModel::decode_latent(const Var& latent, int frames) const {
  const Eigen::Index steps = latent.rows();
  if (latent.cols() != config_.code_dim) throw DimError("rqvae decoder: latent width mismatch");
  if (token_length(frames, config_.downsample) != steps)
    throw DimError("rqvae decoder: " + std::to_string(frames) + " frames need " +
                   std::to_string(token_length(frames, config_.downsample)) + " latent rows");
  Var h = nn::relu(dec_in_(latent));
  h = nn::add(h, nn::relu(dec_mid_(h)));
  h = nn::reshape_rows(dec_up_(h), steps * config_.downsample, config_.hidden);
  h = nn::relu(h);
  h = nn::add(h, nn::relu(dec_smooth_(h)));
  return nn::slice_rows(dec_out_(h), 0, frames);
}

MotionTokenGrid RqvaeModel::encode(const MotionSequence& motion) const {
  require_fitted();
  nn::NoGradGuard guard;
  const Matrix z = encode_latent(normalizer_.apply(motion.features())).value();
  MotionTokenGrid grid;
  grid.downsample = config_.downsample;
  grid.frames = motion.frames();
  grid.tokens = Eigen::MatrixXi::Zero(z.rows(), config_.layers);
  auto error_of = [&](const Matrix& latent) {
    const Matrix decoded = normalizer_.to_motion(decode_latent(nn::constant(latent), grid.frames).value()).features();
    return (decoded - motion.features()).squaredNorm();
  };
  Matrix residual = z;
  Matrix sum = Matrix::Zero(z.rows(), z.cols());
  double current = std::numeric_limits<double>::infinity();
  for (int l = 0; l < config_.layers; ++l) {
    const Matrix& book = codebooks_.codes(l);
    const Quantization nearest = ResidualCodebooks({book}).quantize(residual);
    // Refinement gate: a deeper layer falls back to its zero code at any
    // position where the nearest code would make the decoded motion worse.
    const bool gated = l > 0 && book.row(0).isZero(0.0);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const int k = nearest.tokens(i, 0);
      if (gated && k != 0) {
        Matrix candidate = sum;
        candidate.row(i) += book.row(k);
        const double err = error_of(candidate);
        if (err > current) continue;
        current = err;
      }
      grid.tokens(i, l) = k;
      sum.row(i) += book.row(k);
      residual.row(i) -= book.row(k);
    }
    if (!gated) current = error_of(sum);
  }
  return grid;
}

Matrix RqvaeModel::decode_normalized(const MotionTokenGrid& grid, int use_layers) const {
  require_fitted();
  grid.validate(config_.codebook_size);
  if (grid.downsample != config_.downsample) throw DimError("token grid downsample differs from the model");
  if (grid.layers() != config_.layers) throw DimError("token grid layer count differs from the model");
  nn::NoGradGuard guard;
  return decode_latent(nn::constant(codebooks_.lookup(grid.tokens, use_layers)), grid.frames).value();
}

MotionSequence RqvaeModel::decode(const MotionTokenGrid& grid, int use_layers) const {
  return normalizer_.to_motion(decode_normalized(grid, use_layers));
}

void RqvaeModel::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  enc_in_.visit(prefix + "enc_in.", f);
  enc_down_.visit(prefix + "enc_down.", f);
  enc_mid_.visit(prefix + "enc_mid.", f);
  enc_out_.visit(prefix + "enc_out.", f);
  dec_in_.visit(prefix + "dec_in.", f);
  dec_mid_.visit(prefix + "dec_mid.", f);
  dec_up_.visit(prefix + "dec_up.", f);
  dec_smooth_.visit(prefix + "dec_smooth.", f);
  dec_out_.visit(prefix + "dec_out.", f);
  codebooks_.visit(prefix + "codebook.", f);
}

void RqvaeModel::round_to_stored_precision() {
  visit("", [](const std::string&, Var& v) { v.mutable_value() = to_stored_precision(v.value()); });
  normalizer_.mean = to_stored_precision(normalizer_.mean);
  normalizer_.stddev = to_stored_precision(normalizer_.stddev);
}

Checkpoint RqvaeModel::to_checkpoint() const {
  require_fitted();
  Checkpoint ckpt;
  ckpt.component = kRqvaeComponent;
  ckpt.config = config_.to_config();
  ckpt.add("norm.mean", normalizer_.mean);
  ckpt.add("norm.std", normalizer_.stddev);
  RqvaeModel view = *this;
  ckpt.add_module(view, "");
  return ckpt;
}

RqvaeModel RqvaeModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.component != kRqvaeComponent)
    throw CheckpointError("expected an rqvae checkpoint, got '" + ckpt.component + "'");
  FeatureNormalizer norm;
  norm.mean = ckpt.get("norm.mean");
  norm.stddev = ckpt.get("norm.std");
  if (!norm.fitted()) throw CheckpointError("rqvae checkpoint has a malformed normalizer");
  Rng rng(0);
  RqvaeModel model(RqvaeConfig::from(ckpt.config), std::move(norm), rng);
  ckpt.load_module(model, "");
  nn::set_trainable(model, false);
  model.fitted_ = true;
  return model;
}

MotionTokenGrid rqvae_encode(const MotionSequence& motion, const RqvaeModel& model) { return model.encode(motion); }

MotionSequence rqvae_decode(const MotionTokenGrid& grid, const RqvaeModel& model) { return model.decode(grid); }

// ---- training ----

namespace {

// Layer 0 from k-means over encodings; deeper layers over the residuals, with
// code 0 pinned at the origin so adding a layer never moves a latent farther
// from its target.
void initialize_codebooks(RqvaeModel& model, const std::vector<Matrix>& inputs, Rng& rng) {
  const RqvaeConfig& cfg = model.config();
  std::vector<Matrix> latents;
  Eigen::Index total = 0;
  {
    nn::NoGradGuard guard;
    for (const auto& x : inputs) {
      latents.push_back(model.encode_latent(x).value());
      total += latents.back().rows();
    }
  }
  Matrix residual(total, cfg.code_dim);
  Eigen::Index at = 0;
  for (const auto& z : latents) {
    residual.middleRows(at, z.rows()) = z;
    at += z.rows();
  }
  std::vector<Matrix> books;
  for (int l = 0; l < cfg.layers; ++l) {
    Matrix book(cfg.codebook_size, cfg.code_dim);
    if (l == 0) {
      book = kmeans(residual, cfg.codebook_size, cfg.kmeans_iterations, rng);
    } else {
      book.row(0).setZero();
      book.bottomRows(cfg.codebook_size - 1) = kmeans(residual, cfg.codebook_size - 1, cfg.kmeans_iterations, rng);
      // Exactly-quantized latents leave zero residuals; keep those centers off the pinned zero code.
      const double floor = 1e-3 * std::sqrt(residual.squaredNorm() / static_cast<double>(residual.size()) + 1e-12);
      for (int k = 1; k < cfg.codebook_size; ++k)
        if (book.row(k).cwiseAbs().maxCoeff() < floor)
          for (Eigen::Index j = 0; j < book.cols(); ++j) book(k, j) += floor * rng.normal();
    }
    for (Eigen::Index i = 0; i < residual.rows(); ++i) {
      Eigen::Index best = 0;
      (book.rowwise() - residual.row(i)).rowwise().squaredNorm().minCoeff(&best);
      residual.row(i) -= book.row(best);
    }
    books.push_back(std::move(book));
  }
  int l = 0;
  model.codebooks().visit("", [&](const std::string&, Var& v) { v.mutable_value() = books[l++]; });
}

}  // namespace

RqvaeTrainResult train_rqvae(const Corpus& corpus, const RqvaeConfig& config, std::uint64_t seed,
                             const EpochCallback& on_epoch) {
  if (corpus.empty()) throw InvalidMotion("train_rqvae: empty corpus");
  Rng rng(seed);
  RqvaeTrainResult result{RqvaeModel(config, FeatureNormalizer::fit(corpus), rng), {}};
  RqvaeModel& model = result.model;
  Rng init_rng = rng.fork();
  Rng order_rng = rng.fork();

  std::vector<Matrix> inputs;
  for (const auto& e : corpus) inputs.push_back(model.normalizer().apply(e.motion.features()));
  initialize_codebooks(model, inputs, init_rng);

  nn::Adam::Options opts;
  opts.learning_rate = config.learning_rate;
  std::vector<Var> trainable;
  model.visit("", [&](const std::string& name, Var& v) {
    if (!name.starts_with("codebook.")) trainable.push_back(v);
  });
  nn::Adam adam(trainable, opts);
  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order);
    double sums[3] = {0, 0, 0};
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      Var recon = nn::scalar(0.0), commit = nn::scalar(0.0);
      std::vector<Matrix> code_sums(static_cast<std::size_t>(config.layers),
                                    Matrix::Zero(config.codebook_size, config.code_dim));
      std::vector<Eigen::VectorXd> code_counts(static_cast<std::size_t>(config.layers),
                                               Eigen::VectorXd::Zero(config.codebook_size));
      for (std::size_t s = start; s < stop; ++s) {
        const Matrix& x = inputs[static_cast<std::size_t>(order[s])];
        const Var z = model.encode_latent(x);
        int used = config.layers;
        if (order_rng.uniform() < config.quantizer_dropout)
          used = 1 + static_cast<int>(order_rng.index(static_cast<std::size_t>(config.layers)));
        const Quantization q = model.codebooks().quantize(z.value(), used);
        // Straight-through: forward uses the codes, gradient flows to z unchanged.
        const Var z_q = nn::add(z, nn::constant(q.quantized - z.value()));
        recon = nn::add(recon, nn::smooth_l1(model.decode_latent(z_q, static_cast<int>(x.rows())), nn::constant(x)));
        commit = nn::add(commit, nn::mse(z, nn::constant(q.quantized)));
        Matrix residual = z.value();
        for (int l = 0; l < used; ++l)
          for (Eigen::Index i = 0; i < q.tokens.rows(); ++i) {
            const int k = q.tokens(i, l);
            code_sums[static_cast<std::size_t>(l)].row(k) += residual.row(i);
            code_counts[static_cast<std::size_t>(l)](k) += 1.0;
            residual.row(i) -= model.codebooks().codes(l).row(k);
          }
      }
      const double n = static_cast<double>(stop - start);
      const Var total = nn::scale(nn::add(recon, nn::scale(commit, config.commitment)), 1.0 / n);
      const double value = total.value()(0, 0);
      if (!std::isfinite(value)) throw TrainingDiverged("rqvae", epoch);
      adam.zero_grad();
      nn::backward(total);
      adam.step();
      // Codes move toward the mean residual they were assigned (EMA). The last
      // quarter of training keeps them fixed so the decoder settles on final codes.
      for (int l = 0; l < config.layers && 4 * epoch < 3 * config.epochs; ++l) {
        Matrix& book = model.codebooks().code_var(l).mutable_value();
        const auto& sums_l = code_sums[static_cast<std::size_t>(l)];
        const auto& counts_l = code_counts[static_cast<std::size_t>(l)];
        for (int k = (l == 0 ? 0 : 1); k < config.codebook_size; ++k)
          if (counts_l(k) > 0)
            book.row(k) = config.ema_decay * book.row(k) + (1.0 - config.ema_decay) * sums_l.row(k) / counts_l(k);
      }
      sums[0] += value;
      sums[1] += recon.value()(0, 0) / n;
      sums[2] += commit.value()(0, 0) / n;
      ++batches;
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = sums[0] / batches;
    log.terms = {{"recon", sums[1] / batches}, {"commit", sums[2] / batches}};
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  model.mark_fitted();
  model.round_to_stored_precision();
  nn::set_trainable(model, false);
  return result;
}

}  // namespace kinmo
