#include "kinmo/alignment.hpp"

#include <cmath>
#include <numeric>

#include "kinmo/error.hpp"
#include "kinmo/hash.hpp"

namespace kinmo {

using nn::Matrix;
using nn::Var;

std::string_view to_string(Level level) {
  switch (level) {
    case Level::Global: return "global";
    case Level::Joint: return "joint";
    case Level::Interaction: return "interaction";
  }
  return "?";
}

Level parse_level(std::string_view name) {
  for (Level l : kAllLevels)
    if (to_string(l) == name) return l;
  throw InvalidLevel("unknown level '" + std::string(name) + "' (global, joint, interaction)");
}

const Var& LatentTriple::at(Level level) const {
  switch (level) {
    case Level::Global: return global;
    case Level::Joint: return joint;
    case Level::Interaction: return inter;
  }
  throw InvalidLevel("unknown level");
}

// ---- config ----

AlignConfig AlignConfig::from(const Config& c) {
  AlignConfig a;
  a.latent_dim = c.get("align.latent_dim", a.latent_dim);
  a.depth = c.get("align.depth", a.depth);
  a.heads = c.get("align.heads", a.heads);
  a.ff_dim = c.get("align.ff_dim", a.ff_dim);
  a.vocab_buckets = c.get("align.vocab_buckets", a.vocab_buckets);
  a.max_tokens = c.get("align.max_tokens", a.max_tokens);
  a.epochs = c.get("align.epochs", a.epochs);
  a.batch_size = c.get("align.batch_size", a.batch_size);
  a.learning_rate = c.get("align.learning_rate", a.learning_rate);
  a.negative_filter = c.get("align.negative_filter", a.negative_filter);
  a.weights.nce = c.get("align.lambda_nce", a.weights.nce);
  a.weights.kl = c.get("align.lambda_kl", a.weights.kl);
  a.weights.embedding = c.get("align.lambda_e", a.weights.embedding);
  a.weights.reconstruction = c.get("align.lambda_r", a.weights.reconstruction);
  a.weights.temperature = c.get("align.temperature", a.weights.temperature);
  if (a.latent_dim < 1 || a.depth < 1 || a.heads < 1 || a.latent_dim % a.heads != 0)
    throw ConfigError("align.latent_dim must be a positive multiple of align.heads");
  if (a.ff_dim < 1 || a.vocab_buckets < 1 || a.max_tokens < 1 || a.epochs < 0 || a.batch_size < 1)
    throw ConfigError("align sizes must be positive");
  if (!(a.weights.temperature > 0.0)) throw ConfigError("align.temperature must be positive");
  if (a.weights.nce < 0 || a.weights.kl < 0 || a.weights.embedding < 0 || a.weights.reconstruction < 0)
    throw ConfigError("align loss weights must be nonnegative");
  return a;
}

Config AlignConfig::to_config() const {
  Config c;
  c.set("align.latent_dim", latent_dim);
  c.set("align.depth", depth);
  c.set("align.heads", heads);
  c.set("align.ff_dim", ff_dim);
  c.set("align.vocab_buckets", vocab_buckets);
  c.set("align.max_tokens", max_tokens);
  c.set("align.epochs", epochs);
  c.set("align.batch_size", batch_size);
  c.set("align.learning_rate", learning_rate);
  c.set("align.negative_filter", negative_filter);
  c.set("align.lambda_nce", weights.nce);
  c.set("align.lambda_kl", weights.kl);
  c.set("align.lambda_e", weights.embedding);
  c.set("align.lambda_r", weights.reconstruction);
  c.set("align.temperature", weights.temperature);
  return c;
}

std::set<std::string> AlignConfig::keys() {
  std::set<std::string> out;
  const Config defaults = AlignConfig{}.to_config();
  for (const auto& [k, v] : defaults.entries()) out.insert(k);
  return out;
}

// ---- losses ----

Var cross_attention_fuse(const Var& z_low, const Var& z_coarse, int d_k) {
  if (z_coarse.rows() == 0) throw EmptyContext("cross-attention needs at least one coarse row");
  if (z_low.cols() != z_coarse.cols()) throw DimError("cross-attention operands differ in width");
  if (d_k < 1) throw DimError("d_k must be positive");
  const Var weights = nn::softmax_rows(nn::scale(nn::matmul_nt(z_low, z_coarse), 1.0 / std::sqrt(d_k)));
  return nn::matmul(weights, z_coarse);
}

LatentTriple progressive_fuse(const Gaussian& coarse, const Gaussian& joint, const Gaussian& inter,
                              const Var& gamma) {
  for (const Gaussian* g : {&joint, &inter})
    if (g->mean.rows() != coarse.mean.rows() || g->mean.cols() != coarse.mean.cols() ||
        g->stddev.rows() != g->mean.rows() || g->stddev.cols() != g->mean.cols())
      throw DimError("progressive_fuse: level distributions differ in shape");
  LatentTriple z;
  z.global = coarse.mean;
  z.joint = nn::add(nn::add(coarse.mean, joint.mean), nn::mul(joint.stddev, gamma));
  z.inter = nn::add(nn::add(z.joint, inter.mean), nn::mul(inter.stddev, gamma));
  return z;
}

LatentTriple progressive_fuse(const Gaussian& coarse, const Gaussian& joint, const Gaussian& inter) {
  return progressive_fuse(coarse, joint, inter, nn::scalar(0.0));
}

Var similarity_matrix(const Var& z_text, const Var& z_motion) {
  if (z_text.cols() != z_motion.cols()) throw DimError("similarity_matrix: embedding widths differ");
  return nn::matmul_nt(nn::normalize_rows(z_text), nn::normalize_rows(z_motion));
}

Eigen::MatrixXd similarity_matrix(const Eigen::MatrixXd& z_text, const Eigen::MatrixXd& z_motion) {
  nn::NoGradGuard guard;
  return similarity_matrix(nn::constant(z_text), nn::constant(z_motion)).value();
}

Var infonce(const Var& s, double temperature, const NegativeMask* filter) {
  if (!(temperature > 0.0)) throw InvalidTemperature("temperature must be positive");
  const Eigen::Index n = s.rows();
  if (n < 2 || s.cols() != n) throw DimError("infonce needs a square similarity matrix with N >= 2");
  Var logits = nn::scale(s, 1.0 / temperature);
  if (filter != nullptr) {
    if (filter->rows() != n || filter->cols() != n) throw DimError("negative filter shape mismatch");
    Matrix offset = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        if (i != j && (*filter)(i, j)) offset(i, j) = -1e9;
    logits = nn::add(logits, nn::constant(offset));
  }
  const Var eye = nn::constant(Matrix::Identity(n, n));
  const Var rows = nn::sum_all(nn::mul(nn::log_softmax_rows(logits), eye));
  const Var cols = nn::sum_all(nn::mul(nn::log_softmax_rows(nn::transpose(logits)), eye));
  return nn::scale(nn::add(rows, cols), -1.0 / (2.0 * static_cast<double>(n)));
}

NegativeMask negative_filter_mask(const std::vector<std::string>& captions, const TextEmbedder& embedder,
                                  double threshold) {
  const auto n = static_cast<Eigen::Index>(captions.size());
  Eigen::MatrixXd e(n, embedder.dimension());
  for (Eigen::Index i = 0; i < n; ++i) e.row(i) = embedder.embed(captions[i]).transpose();
  const Eigen::MatrixXd sim = e * e.transpose();
  NegativeMask mask(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) mask(i, j) = i != j && sim(i, j) >= threshold;
  return mask;
}

Var gaussian_kl(const Gaussian& p, const Gaussian& q) {
  const Var log_ratio = nn::sub(nn::log(q.stddev), nn::log(p.stddev));
  const Var inv_q_var = nn::exp(nn::scale(nn::log(q.stddev), -2.0));
  const Var spread = nn::add(nn::square(p.stddev), nn::square(nn::sub(p.mean, q.mean)));
  const Var per_dim = nn::add(nn::add(log_ratio, nn::scale(nn::mul(spread, inv_q_var), 0.5)), nn::scalar(-0.5));
  return nn::mean_all(nn::sum_over_cols(per_dim));
}

Var kl_regularizers(const Gaussian& text, const Gaussian& motion) {
  const Gaussian standard{nn::constant(Matrix::Zero(text.mean.rows(), text.mean.cols())),
                          nn::constant(Matrix::Ones(text.mean.rows(), text.mean.cols()))};
  return nn::add(nn::add(gaussian_kl(text, motion), gaussian_kl(motion, text)),
                 nn::add(gaussian_kl(text, standard), gaussian_kl(motion, standard)));
}

Var embedding_similarity_loss(const Var& z_text, const Var& z_motion) {
  if (z_text.rows() != z_motion.rows() || z_text.cols() != z_motion.cols())
    throw DimError("embedding_similarity_loss: shape mismatch");
  return nn::smooth_l1(z_text, z_motion);
}

Var reconstruction_loss(const Var& decoded, const Var& target) {
  if (decoded.rows() != target.rows() || decoded.cols() != target.cols())
    throw DimError("reconstruction_loss: shape mismatch");
  return nn::smooth_l1(decoded, target);
}

// ---- networks ----

HashedTokenBackbone::HashedTokenBackbone(int buckets, int max_tokens, int dim, Rng& rng)
    : words_(buckets, dim, rng, 0.5), positions_(max_tokens, dim, rng, 0.1),
      buckets_(buckets), max_tokens_(max_tokens), dim_(dim) {}

Var HashedTokenBackbone::encode(std::string_view text) const {
  std::vector<std::string> words = tokenize(text);
  if (words.empty()) words.emplace_back("<empty>");
  if (static_cast<int>(words.size()) > max_tokens_) words.resize(static_cast<std::size_t>(max_tokens_));
  std::vector<int> ids(words.size()), pos(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    ids[i] = static_cast<int>(fnv1a(words[i]) % static_cast<std::uint64_t>(buckets_));
    pos[i] = static_cast<int>(i);
  }
  return nn::add(words_(ids), positions_(pos));
}

void HashedTokenBackbone::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  words_.visit(prefix + "words.", f);
  positions_.visit(prefix + "positions.", f);
}

DistributionEncoder::DistributionEncoder(int in_dim, const AlignConfig& config, Rng& rng)
    : input_(in_dim, config.latent_dim, rng), norm_(config.latent_dim) {
  Matrix tokens(2, config.latent_dim);
  for (Eigen::Index i = 0; i < tokens.size(); ++i) tokens(i) = 0.02 * rng.normal();
  dist_tokens_ = nn::parameter(tokens);
  for (int b = 0; b < config.depth; ++b)
    blocks_.emplace_back(config.latent_dim, config.heads, config.ff_dim, rng);
}

Gaussian DistributionEncoder::operator()(const Var& tokens) const {
  const Var h = input_(tokens);
  const Var seq[] = {dist_tokens_, h};
  Var x = nn::concat_rows(seq);
  x = nn::add(x, nn::constant(nn::sinusoidal_positions(static_cast<int>(x.rows()), static_cast<int>(x.cols()))));
  for (const auto& block : blocks_) x = block(x);
  x = norm_(x);
  return {nn::slice_rows(x, 0, 1), nn::add(nn::softplus(nn::slice_rows(x, 1, 1)), nn::scalar(1e-4))};
}

void DistributionEncoder::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  input_.visit(prefix + "input.", f);
  f(prefix + "dist_tokens", dist_tokens_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) blocks_[b].visit(prefix + "block" + std::to_string(b) + ".", f);
  norm_.visit(prefix + "norm.", f);
}

MotionDecoder::MotionDecoder(const AlignConfig& config, Rng& rng)
    : norm_(config.latent_dim), output_(config.latent_dim, layout::kFeatureDim, rng) {
  for (int b = 0; b < config.depth; ++b)
    blocks_.emplace_back(config.latent_dim, config.heads, config.ff_dim, rng);
}

Var MotionDecoder::operator()(const Var& latent, int frames) const {
  Var x = nn::add(nn::constant(nn::sinusoidal_positions(frames, static_cast<int>(latent.cols()))), latent);
  for (const auto& block : blocks_) x = block(x);
  return output_(norm_(x));
}

void MotionDecoder::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  for (std::size_t b = 0; b < blocks_.size(); ++b) blocks_[b].visit(prefix + "block" + std::to_string(b) + ".", f);
  norm_.visit(prefix + "norm.", f);
  output_.visit(prefix + "output.", f);
}

Gaussian TextEncoding::distribution(Level level) const {
  switch (level) {
    case Level::Global: return {fused.global, global.stddev};
    case Level::Joint: return {fused.joint, joint.stddev};
    case Level::Interaction: return {fused.inter, inter.stddev};
  }
  throw InvalidLevel("unknown level");
}

AlignmentModel::AlignmentModel(const AlignConfig& config, FeatureNormalizer normalizer, Rng& rng)
    : config_(config), normalizer_(std::move(normalizer)),
      backbone_(config.vocab_buckets, config.max_tokens, config.latent_dim, rng),
      group_embedding_(kNumGroups, config.latent_dim, rng, 0.5),
      pair_embedding_(kNumGroupPairs, config.latent_dim, rng, 0.5),
      global_encoder_(config.latent_dim, config, rng),
      joint_encoder_(config.latent_dim, config, rng),
      inter_encoder_(config.latent_dim, config, rng),
      motion_encoder_(layout::kFeatureDim, config, rng),
      decoder_(config, rng),
      gamma_(nn::parameter(Matrix::Zero(1, 1))) {}

TextEncoding AlignmentModel::encode_text(const HierarchicalAnnotation& annotation, std::size_t caption,
                                         Level depth) const {
  if (caption >= annotation.global_texts.size())
    throw InvalidAnnotation("caption index " + std::to_string(caption) + " out of range");
  const int d = config_.latent_dim;
  TextEncoding enc;
  enc.global_tokens = backbone_.encode(annotation.global_texts[caption]);
  enc.global = global_encoder_(enc.global_tokens);
  enc.fused.global = enc.global.mean;
  if (depth == Level::Global) return enc;

  std::vector<Var> parts;
  for (auto g : kAllGroups) {
    const int id = index_of(g);
    parts.push_back(nn::add(backbone_.encode(annotation.joint(g)), group_embedding_(std::span(&id, 1))));
  }
  Var joint_tokens = nn::concat_rows(parts);
  enc.joint_tokens = nn::add(joint_tokens, cross_attention_fuse(joint_tokens, enc.global_tokens, d));
  enc.joint = joint_encoder_(enc.joint_tokens);
  enc.fused.joint = nn::add(nn::add(enc.global.mean, enc.joint.mean), nn::mul(enc.joint.stddev, gamma_));
  if (depth == Level::Joint) return enc;

  parts.clear();
  const auto pairs = all_group_pairs();
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const int id = static_cast<int>(p);
    parts.push_back(nn::add(backbone_.encode(annotation.interaction(pairs[p])), pair_embedding_(std::span(&id, 1))));
  }
  Var inter_tokens = nn::concat_rows(parts);
  enc.inter_tokens = nn::add(inter_tokens, cross_attention_fuse(inter_tokens, enc.global_tokens, d));
  enc.inter = inter_encoder_(enc.inter_tokens);
  enc.fused = progressive_fuse(enc.global, enc.joint, enc.inter, gamma_);
  return enc;
}

Gaussian AlignmentModel::encode_normalized(const Var& normalized) const { return motion_encoder_(normalized); }

Gaussian AlignmentModel::encode_motion(const MotionSequence& motion) const {
  return encode_normalized(nn::constant(normalizer_.apply(motion.features())));
}

Var AlignmentModel::decode(const Var& latent, int frames) const { return decoder_(latent, frames); }

void AlignmentModel::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  backbone_.visit(prefix + "backbone.", f);
  group_embedding_.visit(prefix + "group_embedding.", f);
  pair_embedding_.visit(prefix + "pair_embedding.", f);
  global_encoder_.visit(prefix + "global_encoder.", f);
  joint_encoder_.visit(prefix + "joint_encoder.", f);
  inter_encoder_.visit(prefix + "inter_encoder.", f);
  motion_encoder_.visit(prefix + "motion_encoder.", f);
  decoder_.visit(prefix + "decoder.", f);
  f(prefix + "gamma", gamma_);
}

void AlignmentModel::round_to_stored_precision() {
  visit("", [](const std::string&, Var& v) { v.mutable_value() = to_stored_precision(v.value()); });
  normalizer_.mean = to_stored_precision(normalizer_.mean);
  normalizer_.stddev = to_stored_precision(normalizer_.stddev);
}

Checkpoint AlignmentModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.component = kAlignmentComponent;
  ckpt.config = config_.to_config();
  ckpt.add("norm.mean", normalizer_.mean);
  ckpt.add("norm.std", normalizer_.stddev);
  AlignmentModel view = *this;  // shares parameter nodes; read only
  ckpt.add_module(view, "");
  return ckpt;
}

AlignmentModel AlignmentModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.component != kAlignmentComponent)
    throw CheckpointError("expected an alignment checkpoint, got '" + ckpt.component + "'");
  const AlignConfig config = AlignConfig::from(ckpt.config);
  FeatureNormalizer norm;
  norm.mean = ckpt.get("norm.mean");
  norm.stddev = ckpt.get("norm.std");
  if (!norm.fitted()) throw CheckpointError("alignment checkpoint has a malformed normalizer");
  Rng rng(0);
  AlignmentModel model(config, std::move(norm), rng);
  ckpt.load_module(model, "");
  nn::set_trainable(model, false);
  return model;
}

// ---- training ----

namespace {

std::vector<std::vector<int>> make_batches(std::vector<int> order, int batch_size) {
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size))
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  // InfoNCE needs two rows; fold a trailing singleton into its neighbour.
  if (out.size() > 1 && out.back().size() == 1) {
    out[out.size() - 2].push_back(out.back().front());
    out.pop_back();
  }
  return out;
}

Var sample(const Gaussian& g, Rng& rng) {
  Matrix eps(g.mean.rows(), g.mean.cols());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = rng.normal();
  return nn::add(g.mean, nn::mul(g.stddev, nn::constant(eps)));
}

}  // namespace

AlignmentTrainResult train_alignment(const Corpus& corpus, const AlignConfig& config, std::uint64_t seed,
                                     const EpochCallback& on_epoch) {
  if (corpus.empty()) throw InvalidMotion("train_alignment: empty corpus");
  for (const auto& e : corpus) e.annotation.validate();
  Rng rng(seed);
  AlignmentTrainResult result{AlignmentModel(config, FeatureNormalizer::fit(corpus), rng), {}};
  AlignmentModel& model = result.model;
  Rng order_rng = rng.fork();
  Rng noise_rng = rng.fork();

  std::vector<Var> inputs;
  std::vector<std::string> first_captions;
  for (const auto& e : corpus) {
    inputs.push_back(nn::constant(model.normalizer().apply(e.motion.features())));
    first_captions.push_back(e.annotation.global_texts.front());
  }
  const HashingTextEmbedder filter_embedder;
  const NegativeMask full_mask = negative_filter_mask(first_captions, filter_embedder, config.negative_filter);

  nn::Adam::Options opts;
  opts.learning_rate = config.learning_rate;
  nn::Adam adam(nn::parameters(model), opts);
  const auto& w = config.weights;
  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order);
    double sums[5] = {0, 0, 0, 0, 0};
    int batches = 0;
    for (const auto& batch : make_batches(order, config.batch_size)) {
      const auto b = static_cast<Eigen::Index>(batch.size());
      std::vector<Var> text_mu[3], text_sigma[3], motion_mu, motion_sigma;
      Var recon = nn::scalar(0.0);
      for (int idx : batch) {
        const auto& entry = corpus[static_cast<std::size_t>(idx)];
        const std::size_t caption = order_rng.index(entry.annotation.global_texts.size());
        const TextEncoding enc = model.encode_text(entry.annotation, caption);
        const Gaussian motion = model.encode_normalized(inputs[static_cast<std::size_t>(idx)]);
        for (Level l : kAllLevels) {
          const Gaussian g = enc.distribution(l);
          text_mu[static_cast<int>(l)].push_back(g.mean);
          text_sigma[static_cast<int>(l)].push_back(g.stddev);
        }
        motion_mu.push_back(motion.mean);
        motion_sigma.push_back(motion.stddev);
        const int frames = entry.motion.frames();
        const Var& target = inputs[static_cast<std::size_t>(idx)];
        recon = nn::add(recon, reconstruction_loss(model.decode(sample(motion, noise_rng), frames), target));
        recon = nn::add(recon, reconstruction_loss(
                                   model.decode(sample(enc.distribution(Level::Interaction), noise_rng), frames),
                                   target));
      }
      recon = nn::scale(recon, 1.0 / (2.0 * static_cast<double>(b)));

      NegativeMask mask(b, b);
      for (Eigen::Index i = 0; i < b; ++i)
        for (Eigen::Index j = 0; j < b; ++j) mask(i, j) = full_mask(batch[i], batch[j]);
      const Gaussian motion{nn::concat_rows(motion_mu), nn::concat_rows(motion_sigma)};
      Var nce = nn::scalar(0.0), kl = nn::scalar(0.0), emb = nn::scalar(0.0);
      for (int l = 0; l < 3; ++l) {
        const Gaussian text{nn::concat_rows(text_mu[l]), nn::concat_rows(text_sigma[l])};
        // A single-pair batch has no negatives; the contrastive term is skipped.
        if (b >= 2) nce = nn::add(nce, infonce(similarity_matrix(text.mean, motion.mean), w.temperature, &mask));
        kl = nn::add(kl, kl_regularizers(text, motion));
        emb = nn::add(emb, embedding_similarity_loss(text.mean, motion.mean));
      }
      const Var total = nn::add(nn::add(nn::scale(nce, w.nce), nn::scale(kl, w.kl)),
                                nn::add(nn::scale(emb, w.embedding), nn::scale(recon, w.reconstruction)));
      const double value = total.value()(0, 0);
      if (!std::isfinite(value)) throw TrainingDiverged("alignment", epoch);
      adam.zero_grad();
      nn::backward(total);
      adam.step();
      sums[0] += value;
      sums[1] += nce.value()(0, 0);
      sums[2] += kl.value()(0, 0);
      sums[3] += emb.value()(0, 0);
      sums[4] += recon.value()(0, 0);
      ++batches;
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = sums[0] / batches;
    log.terms = {{"nce", sums[1] / batches},
                 {"kl", sums[2] / batches},
                 {"embedding", sums[3] / batches},
                 {"reconstruction", sums[4] / batches}};
    if (on_epoch) on_epoch(log);
    result.log.push_back(std::move(log));
  }
  model.round_to_stored_precision();
  nn::set_trainable(model, false);
  return result;
}

Eigen::VectorXd embed_text(const HierarchicalAnnotation& annotation, Level level, const AlignmentModel& model) {
  nn::NoGradGuard guard;
  return model.encode_text(annotation, 0, level).fused.at(level).value().row(0).transpose();
}

Eigen::VectorXd embed_motion(const MotionSequence& motion, const AlignmentModel& model) {
  nn::NoGradGuard guard;
  return model.encode_motion(motion).mean.value().row(0).transpose();
}

}  // namespace kinmo
