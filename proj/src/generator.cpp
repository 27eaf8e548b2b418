#include "kinmo/generator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>

#include "kinmo/error.hpp"

namespace kinmo {

using nn::Matrix;
using nn::Var;

GenConfig GenConfig::from(const Config& c) {
  GenConfig g;
  g.dim = c.get("gen.dim", g.dim);
  g.depth = c.get("gen.depth", g.depth);
  g.heads = c.get("gen.heads", g.heads);
  g.ff_dim = c.get("gen.ff_dim", g.ff_dim);
  g.residual_depth = c.get("gen.residual_depth", g.residual_depth);
  g.epochs = c.get("gen.epochs", g.epochs);
  g.batch_size = c.get("gen.batch_size", g.batch_size);
  g.learning_rate = c.get("gen.learning_rate", g.learning_rate);
  g.cond_dropout = c.get("gen.cond_dropout", g.cond_dropout);
  g.guidance = c.get("gen.guidance", g.guidance);
  g.remask_ratio = c.get("gen.remask_ratio", g.remask_ratio);
  g.stage1_iterations = c.get("gen.stage1_iterations", g.stage1_iterations);
  g.stage2_iterations = c.get("gen.stage2_iterations", g.stage2_iterations);
  g.stage3_iterations = c.get("gen.stage3_iterations", g.stage3_iterations);
  g.temperature = c.get("gen.temperature", g.temperature);
  if (g.dim < 1 || g.heads < 1 || g.dim % g.heads != 0 || g.depth < 1 || g.residual_depth < 1 || g.ff_dim < 1)
    throw ConfigError("gen.dim must be a positive multiple of gen.heads; depths and ff_dim positive");
  if (g.epochs < 0 || g.batch_size < 1 || !(g.learning_rate > 0.0))
    throw ConfigError("gen.epochs/batch_size/learning_rate out of range");
  if (g.cond_dropout < 0.0 || g.cond_dropout > 1.0) throw ConfigError("gen.cond_dropout must lie in [0, 1]");
  if (g.remask_ratio < 0.0 || g.remask_ratio > 1.0) throw ConfigError("gen.remask_ratio must lie in [0, 1]");
  if (g.stage1_iterations < 1 || g.stage2_iterations < 1 || g.stage3_iterations < 1)
    throw ConfigError("gen stage iterations must be >= 1");
  if (g.temperature < 0.0 || !std::isfinite(g.guidance)) throw ConfigError("gen.temperature must be >= 0");
  return g;
}

Config GenConfig::to_config() const {
  Config c;
  c.set("gen.dim", dim);
  c.set("gen.depth", depth);
  c.set("gen.heads", heads);
  c.set("gen.ff_dim", ff_dim);
  c.set("gen.residual_depth", residual_depth);
  c.set("gen.epochs", epochs);
  c.set("gen.batch_size", batch_size);
  c.set("gen.learning_rate", learning_rate);
  c.set("gen.cond_dropout", cond_dropout);
  c.set("gen.guidance", guidance);
  c.set("gen.remask_ratio", remask_ratio);
  c.set("gen.stage1_iterations", stage1_iterations);
  c.set("gen.stage2_iterations", stage2_iterations);
  c.set("gen.stage3_iterations", stage3_iterations);
  c.set("gen.temperature", temperature);
  return c;
}

std::set<std::string> GenConfig::keys() {
  std::set<std::string> out;
  const Config defaults = GenConfig{}.to_config();
  for (const auto& [k, v] : defaults.entries()) out.insert(k);
  return out;
}

double mask_schedule(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DimError("mask_schedule: t must lie in [0, 1]");
  if (t == 1.0) return 0.0;
  return std::cos(std::numbers::pi * t / 2.0);
}

// ---- conditioning ----

ConditionTokens ConditionTokens::null() {
  ConditionTokens c;
  c.unconditional = true;
  c.kinds = {kConditionKinds - 1};
  c.global_rows = 1;
  return c;
}

ConditionTokens condition_tokens(const HierarchicalAnnotation& annotation, Level level,
                                 const AlignmentModel& alignment, std::size_t caption) {
  nn::NoGradGuard guard;
  const TextEncoding enc = alignment.encode_text(annotation, caption, level);
  ConditionTokens c;
  c.level = level;
  std::vector<Matrix> parts;
  auto append = [&](const Var& latent, const Var& tokens, int kind) {
    parts.push_back(latent.value());
    c.kinds.push_back(kind);
    parts.push_back(tokens.value());
    c.kinds.insert(c.kinds.end(), static_cast<std::size_t>(tokens.rows()), kind + 1);
  };
  append(enc.fused.global, enc.global_tokens, 0);
  c.global_rows = static_cast<int>(c.kinds.size());
  if (level != Level::Global) append(enc.fused.joint, enc.joint_tokens, 2);
  if (level == Level::Interaction) append(enc.fused.inter, enc.inter_tokens, 4);
  c.rows.resize(static_cast<Eigen::Index>(c.kinds.size()), alignment.config().latent_dim);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    c.rows.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  return c;
}

ConditionEncoder::ConditionEncoder(int latent_dim, int dim, int heads, Rng& rng)
    : project_(latent_dim, dim, rng), kinds_(kConditionKinds, dim, rng, 0.5), norm_(dim),
      fuse_(dim, heads, rng) {}

Var ConditionEncoder::operator()(const ConditionTokens& cond) const {
  Var x;
  if (cond.unconditional) {
    x = kinds_(cond.kinds);
  } else {
    if (cond.rows.cols() != project_.weight.rows())
      throw DimError("condition rows have width " + std::to_string(cond.rows.cols()) + ", expected " +
                     std::to_string(project_.weight.rows()));
    x = nn::add(project_(nn::constant(cond.rows)), kinds_(cond.kinds));
  }
  const Var normed = norm_(x);
  return nn::add(x, fuse_(normed, nn::slice_rows(normed, 0, cond.global_rows)));
}

void ConditionEncoder::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  project_.visit(prefix + "project.", f);
  kinds_.visit(prefix + "kinds.", f);
  norm_.visit(prefix + "norm.", f);
  fuse_.visit(prefix + "fuse.", f);
}

// ---- networks ----

MaskedGenerator::MaskedGenerator(const GenConfig& config, int latent_dim, int codebook_size, Rng& rng)
    : condition_(latent_dim, config.dim, config.heads, rng),
      tokens_(codebook_size + 1, config.dim, rng, 0.5),
      norm_(config.dim),
      out_(config.dim, codebook_size, rng),
      dim_(config.dim),
      codebook_size_(codebook_size) {
  for (int b = 0; b < config.depth; ++b) blocks_.emplace_back(config.dim, config.heads, config.ff_dim, rng);
}

Var MaskedGenerator::embed(std::span<const int> ids, const ConditionTokens& cond) const {
  if (ids.empty()) throw DimError("generator needs at least one token");
  for (int id : ids)
    if (id < 0 || id > codebook_size_) throw DimError("token id out of range");
  const Var motion = nn::add(tokens_(ids), nn::constant(nn::sinusoidal_positions(static_cast<int>(ids.size()), dim_)));
  const Var parts[] = {condition_(cond), motion};
  return nn::concat_rows(parts);
}

Var MaskedGenerator::head(const Var& hidden, int motion_rows) const {
  return out_(norm_(nn::slice_rows(hidden, hidden.rows() - motion_rows, motion_rows)));
}

Var MaskedGenerator::logits(std::span<const int> ids, const ConditionTokens& cond) const {
  Var h = embed(ids, cond);
  for (const auto& b : blocks_) h = b(h);
  return head(h, static_cast<int>(ids.size()));
}

void MaskedGenerator::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  condition_.visit(prefix + "condition.", f);
  tokens_.visit(prefix + "tokens.", f);
  for (std::size_t b = 0; b < blocks_.size(); ++b) blocks_[b].visit(prefix + "block" + std::to_string(b) + ".", f);
  norm_.visit(prefix + "norm.", f);
  out_.visit(prefix + "out.", f);
}

ResidualTransformer::ResidualTransformer(const GenConfig& config, int latent_dim, int layers, int codebook_size,
                                         Rng& rng)
    : condition_(latent_dim, config.dim, config.heads, rng),
      layer_(std::max(layers, 1), config.dim, rng, 0.5),
      norm_(config.dim),
      dim_(config.dim) {
  for (int l = 0; l + 1 < layers; ++l) tokens_.emplace_back(codebook_size, config.dim, rng, 0.5);
  for (int b = 0; b < config.residual_depth; ++b)
    blocks_.emplace_back(config.dim, config.heads, config.ff_dim, rng);
  for (int l = 1; l < layers; ++l) heads_.emplace_back(config.dim, codebook_size, rng);
}

Var ResidualTransformer::logits(const Eigen::MatrixXi& tokens, int layer, const ConditionTokens& cond) const {
  if (layer < 1 || layer > static_cast<int>(heads_.size()) || tokens.cols() < layer)
    throw DimError("residual layer " + std::to_string(layer) + " out of range");
  const int steps = static_cast<int>(tokens.rows());
  Var x = nn::constant(nn::sinusoidal_positions(steps, dim_));
  for (int l = 0; l < layer; ++l) {
    std::vector<int> ids(tokens.col(l).data(), tokens.col(l).data() + steps);
    x = nn::add(x, tokens_[static_cast<std::size_t>(l)](ids));
  }
  const int id = layer;
  x = nn::add(x, layer_(std::span(&id, 1)));
  const Var parts[] = {condition_(cond), x};
  Var h = nn::concat_rows(parts);
  for (const auto& b : blocks_) h = b(h);
  return heads_[static_cast<std::size_t>(layer - 1)](norm_(nn::slice_rows(h, h.rows() - steps, steps)));
}

void ResidualTransformer::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  condition_.visit(prefix + "condition.", f);
  for (std::size_t l = 0; l < tokens_.size(); ++l) tokens_[l].visit(prefix + "tokens" + std::to_string(l) + ".", f);
  layer_.visit(prefix + "layer.", f);
  for (std::size_t b = 0; b < blocks_.size(); ++b) blocks_[b].visit(prefix + "block" + std::to_string(b) + ".", f);
  norm_.visit(prefix + "norm.", f);
  for (std::size_t l = 0; l < heads_.size(); ++l) heads_[l].visit(prefix + "head" + std::to_string(l + 1) + ".", f);
}

GeneratorModel::GeneratorModel(const GenConfig& config, int latent_dim, int layers, int codebook_size, Rng& rng)
    : config_(config), latent_dim_(latent_dim), layers_(layers), codebook_size_(codebook_size),
      base_(config, latent_dim, codebook_size, rng),
      residual_(config, latent_dim, layers, codebook_size, rng) {}

void GeneratorModel::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  base_.visit(prefix + "base.", f);
  residual_.visit(prefix + "residual.", f);
}

void GeneratorModel::round_to_stored_precision() {
  visit("", [](const std::string&, Var& v) { v.mutable_value() = to_stored_precision(v.value()); });
}

Checkpoint GeneratorModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.component = kGeneratorComponent;
  ckpt.config = config_.to_config();
  ckpt.config.set("shape.latent_dim", latent_dim_);
  ckpt.config.set("shape.layers", layers_);
  ckpt.config.set("shape.codebook_size", codebook_size_);
  GeneratorModel view = *this;
  ckpt.add_module(view, "");
  return ckpt;
}

GeneratorModel GeneratorModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.component != kGeneratorComponent)
    throw CheckpointError("expected a generator checkpoint, got '" + ckpt.component + "'");
  if (!ckpt.config.has("shape.latent_dim") || !ckpt.config.has("shape.layers") ||
      !ckpt.config.has("shape.codebook_size"))
    throw CheckpointError("generator checkpoint lacks shape.* entries");
  Rng rng(0);
  GeneratorModel model(GenConfig::from(ckpt.config), ckpt.config.get("shape.latent_dim", 0),
                       ckpt.config.get("shape.layers", 0), ckpt.config.get("shape.codebook_size", 0), rng);
  ckpt.load_module(model, "");
  nn::set_trainable(model, false);
  return model;
}

// ---- training ----

namespace {

std::vector<int> column_ids(const Eigen::MatrixXi& tokens, int col) {
  return std::vector<int>(tokens.col(col).data(), tokens.col(col).data() + tokens.rows());
}

}  // namespace

std::vector<int> choose_positions(int n, int count, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::vector<LevelConditions>> precompute_conditions(const std::vector<TokenizedEntry>& data,
                                                                const AlignmentModel& alignment) {
  std::vector<std::vector<LevelConditions>> out;
  for (const auto& e : data) {
    std::vector<LevelConditions> per_caption;
    for (std::size_t c = 0; c < e.annotation.global_texts.size(); ++c) {
      LevelConditions lc;
      for (Level l : kAllLevels) lc[static_cast<std::size_t>(l)] = condition_tokens(e.annotation, l, alignment, c);
      per_caption.push_back(std::move(lc));
    }
    out.push_back(std::move(per_caption));
  }
  return out;
}

GeneratorTrainResult train_generator(const std::vector<TokenizedEntry>& data, const AlignmentModel& alignment,
                                     int codebook_size, const GenConfig& config, std::uint64_t seed,
                                     const EpochCallback& on_epoch) {
  if (data.empty()) throw InvalidMotion("train_generator: no tokenized sequences");
  const int layers = data.front().grid.layers();
  for (const auto& e : data) {
    e.annotation.validate();
    e.grid.validate(codebook_size);
    if (e.grid.layers() != layers) throw DimError("token grids disagree on layer count");
  }
  Rng rng(seed);
  GeneratorTrainResult result{GeneratorModel(config, alignment.config().latent_dim, layers, codebook_size, rng), {}};
  GeneratorModel& model = result.model;
  Rng order_rng = rng.fork();
  const auto conditions = precompute_conditions(data, alignment);
  const ConditionTokens null_cond = ConditionTokens::null();

  nn::Adam::Options opts;
  opts.learning_rate = config.learning_rate;
  nn::Adam adam(nn::parameters(model), opts);
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order);
    double sums[3] = {0, 0, 0};
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto level = static_cast<std::size_t>(order_rng.index(3));
      Var base_loss = nn::scalar(0.0), residual_loss = nn::scalar(0.0);
      for (std::size_t s = start; s < stop; ++s) {
        const auto idx = static_cast<std::size_t>(order[s]);
        const MotionTokenGrid& grid = data[idx].grid;
        const std::size_t caption = order_rng.index(conditions[idx].size());
        const bool drop = order_rng.uniform() < config.cond_dropout;
        const ConditionTokens& cond = drop ? null_cond : conditions[idx][caption][level];

        const int steps = grid.length();
        const double fraction = mask_schedule(order_rng.uniform());
        const int count = std::clamp(static_cast<int>(std::ceil(fraction * steps)), 1, steps);
        std::vector<int> ids = column_ids(grid.tokens, 0);
        const std::vector<int> targets = ids;
        std::vector<double> weights(ids.size(), 0.0);
        for (int p : choose_positions(steps, count, order_rng)) {
          ids[static_cast<std::size_t>(p)] = model.base().mask_id();
          weights[static_cast<std::size_t>(p)] = 1.0;
        }
        base_loss = nn::add(base_loss, nn::cross_entropy_rows(model.base().logits(ids, cond), targets, weights));
        if (layers > 1) {
          const int q = 1 + static_cast<int>(order_rng.index(static_cast<std::size_t>(layers - 1)));
          residual_loss = nn::add(residual_loss, nn::cross_entropy_rows(model.residual().logits(grid.tokens, q, cond),
                                                                        column_ids(grid.tokens, q)));
        }
      }
      const double n = static_cast<double>(stop - start);
      const Var total = nn::scale(nn::add(base_loss, residual_loss), 1.0 / n);
      const double value = total.value()(0, 0);
      if (!std::isfinite(value)) throw TrainingDiverged("generator", epoch);
      adam.zero_grad();
      nn::backward(total);
      adam.step();
      sums[0] += value;
      sums[1] += base_loss.value()(0, 0) / n;
      sums[2] += residual_loss.value()(0, 0) / n;
      ++batches;
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = sums[0] / batches;
    log.terms = {{"base_ce", sums[1] / batches}, {"residual_ce", sums[2] / batches}};
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  model.round_to_stored_precision();
  nn::set_trainable(model, false);
  return result;
}

double masked_token_accuracy(const std::vector<TokenizedEntry>& data, const GeneratorModel& model,
                             const AlignmentModel& alignment, Level level, double fraction, std::uint64_t seed) {
  if (data.empty()) throw InvalidMotion("masked_token_accuracy: no sequences");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw DimError("mask fraction must lie in (0, 1]");
  nn::NoGradGuard guard;
  Rng rng(seed);
  long hits = 0, total = 0;
  for (const auto& e : data) {
    const ConditionTokens cond = condition_tokens(e.annotation, level, alignment);
    const int steps = e.grid.length();
    const int count = std::clamp(static_cast<int>(std::ceil(fraction * steps)), 1, steps);
    std::vector<int> ids = column_ids(e.grid.tokens, 0);
    const std::vector<int> positions = choose_positions(steps, count, rng);
    for (int p : positions) ids[static_cast<std::size_t>(p)] = model.base().mask_id();
    const Matrix logits = model.base().logits(ids, cond).value();
    for (int p : positions) {
      Eigen::Index best = 0;
      logits.row(p).maxCoeff(&best);
      hits += best == e.grid.tokens(p, 0);
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

// ---- sampling ----

Matrix guided_logits(const Matrix& conditional, const Matrix& unconditional, double scale) {
  if (conditional.rows() != unconditional.rows() || conditional.cols() != unconditional.cols())
    throw DimError("guided_logits: shapes differ");
  return unconditional + scale * (conditional - unconditional);
}

namespace {

struct Sampler {
  const GeneratorModel& generator;
  BaseLogitsFn base;
  double guidance;
  double temperature;
  Rng rng;
  ConditionTokens null_cond = ConditionTokens::null();

  Matrix base_logits(std::span<const int> ids, const ConditionTokens& cond) {
    return guided_logits(base(ids, cond), base(ids, null_cond), guidance);
  }

  // Pick a token from one row of logits; returns (token, its probability).
  std::pair<int, double> pick(const Eigen::RowVectorXd& logits) {
    const double t = temperature > 0.0 ? temperature : 1.0;
    Eigen::RowVectorXd p = ((logits.array() - logits.maxCoeff()) / t).exp();
    p /= p.sum();
    Eigen::Index k = 0;
    if (temperature > 0.0) {
      double u = rng.uniform();
      k = p.size() - 1;
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        u -= p(i);
        if (u < 0.0) {
          k = i;
          break;
        }
      }
    } else {
      p.maxCoeff(&k);
    }
    return {static_cast<int>(k), p(k)};
  }

  // Iterative mask-predict over `positions`: each round fills every masked
  // slot, then re-masks the least confident per the cosine schedule.
  void mask_predict(std::vector<int>& ids, std::vector<double>& confidence, std::vector<int> masked,
                    const ConditionTokens& cond, int iterations) {
    const auto initial = static_cast<double>(masked.size());
    for (int p : masked) ids[static_cast<std::size_t>(p)] = generator.base().mask_id();
    for (int it = 0; it < iterations && !masked.empty(); ++it) {
      const Matrix logits = base_logits(ids, cond);
      for (int p : masked) {
        const auto [k, prob] = pick(logits.row(p));
        ids[static_cast<std::size_t>(p)] = k;
        confidence[static_cast<std::size_t>(p)] = prob;
      }
      std::size_t keep = static_cast<std::size_t>(
          std::floor(initial * mask_schedule(static_cast<double>(it + 1) / iterations)));
      keep = std::min(keep, masked.size() - 1);
      std::stable_sort(masked.begin(), masked.end(), [&](int a, int b) {
        return confidence[static_cast<std::size_t>(a)] < confidence[static_cast<std::size_t>(b)];
      });
      masked.resize(keep);
      std::sort(masked.begin(), masked.end());
      for (int p : masked) ids[static_cast<std::size_t>(p)] = generator.base().mask_id();
    }
  }
};

MotionTokenGrid coarse_to_fine(const MotionTokenGrid& source, const std::vector<int>& editable,
                               const HierarchicalAnnotation& annotation, Level max_level,
                               const GenerationModels& models, const GenerationOptions& options,
                               const BaseLogitsFn& base_logits) {
  const GeneratorModel& gen = *models.generator;
  const GenConfig& cfg = gen.config();
  nn::NoGradGuard guard;
  BaseLogitsFn base = base_logits;
  if (!base)
    base = [&gen](std::span<const int> ids, const ConditionTokens& c) { return gen.base().logits(ids, c).value(); };
  Sampler sampler{gen, base, options.guidance.value_or(cfg.guidance), options.temperature.value_or(cfg.temperature),
                  Rng(options.seed)};
  const double rho = options.remask_ratio.value_or(cfg.remask_ratio);
  if (rho < 0.0 || rho > 1.0) throw ConfigError("remask ratio must lie in [0, 1]");

  std::array<ConditionTokens, 3> conds;
  for (Level l : kAllLevels)
    if (static_cast<int>(l) <= static_cast<int>(max_level))
      conds[static_cast<std::size_t>(l)] = condition_tokens(annotation, l, *models.alignment);

  std::vector<int> ids = column_ids(source.tokens, 0);
  std::vector<double> confidence(ids.size(), 1.0);
  sampler.mask_predict(ids, confidence, editable, conds[0], cfg.stage1_iterations);
  const int refine_iterations[] = {cfg.stage2_iterations, cfg.stage3_iterations};
  for (Level l : {Level::Joint, Level::Interaction}) {
    if (static_cast<int>(l) > static_cast<int>(max_level)) break;
    const auto count = static_cast<std::size_t>(std::llround(rho * static_cast<double>(editable.size())));
    if (count == 0) continue;
    std::vector<int> chosen = editable;
    std::stable_sort(chosen.begin(), chosen.end(), [&](int a, int b) {
      return confidence[static_cast<std::size_t>(a)] < confidence[static_cast<std::size_t>(b)];
    });
    chosen.resize(count);
    std::sort(chosen.begin(), chosen.end());
    sampler.mask_predict(ids, confidence, chosen, conds[static_cast<std::size_t>(l)],
                         refine_iterations[static_cast<int>(l) - 1]);
  }

  MotionTokenGrid out = source;
  for (int p : editable) out.tokens(p, 0) = ids[static_cast<std::size_t>(p)];
  const ConditionTokens& top = conds[static_cast<std::size_t>(max_level)];
  for (int q = 1; q < out.layers(); ++q) {
    const Matrix logits = guided_logits(gen.residual().logits(out.tokens, q, top).value(),
                                        gen.residual().logits(out.tokens, q, sampler.null_cond).value(),
                                        sampler.guidance);
    for (int p : editable) {
      Eigen::Index best = 0;
      logits.row(p).maxCoeff(&best);
      out.tokens(p, q) = static_cast<int>(best);
    }
  }
  return out;
}

void check_models(const GenerationModels& models) {
  if (!models.alignment || !models.rqvae || !models.generator) throw NotFitted("generation needs all three models");
  if (!models.rqvae->fitted()) throw NotFitted("RQ-VAE is untrained");
  if (models.generator->layers() != models.rqvae->config().layers ||
      models.generator->codebook_size() != models.rqvae->config().codebook_size)
    throw DimError("generator and RQ-VAE disagree on layers or codebook size");
  if (models.generator->latent_dim() != models.alignment->config().latent_dim)
    throw DimError("generator and alignment model disagree on latent width");
}

}  // namespace

MotionTokenGrid edit_infill(const MotionTokenGrid& source, const std::vector<bool>& frame_mask,
                            const HierarchicalAnnotation& annotation, const GenerationModels& models,
                            const GenerationOptions& options, const BaseLogitsFn& base_logits) {
  check_models(models);
  source.validate(models.rqvae->config().codebook_size);
  if (source.layers() != models.generator->layers()) throw DimError("source grid layer count differs from the model");
  if (static_cast<int>(frame_mask.size()) != source.length())
    throw DimError("edit mask has " + std::to_string(frame_mask.size()) + " entries, grid has " +
                   std::to_string(source.length()) + " positions");
  std::vector<int> editable;
  for (std::size_t i = 0; i < frame_mask.size(); ++i)
    if (frame_mask[i]) editable.push_back(static_cast<int>(i));
  if (editable.empty()) return source;
  return coarse_to_fine(source, editable, annotation, options.max_level, models, options, base_logits);
}

GenerationResult generate(const std::string& text, ReasonerClient& reasoner, const GenerationModels& models,
                          int frames, const GenerationOptions& options, const BaseLogitsFn& base_logits) {
  check_models(models);
  if (frames < 1) throw InvalidMotion("generate: length must be positive");
  GenerationResult result;
  GenerationMetadata& meta = result.metadata;
  meta.seed = options.seed;
  meta.frames = frames;
  meta.level_used = options.max_level;
  try {
    meta.annotation = reasoner.expand(text);
    meta.annotation.validate();
  } catch (const std::exception& e) {
    meta.reasoner_fallback = true;
    meta.reasoner_error = e.what();
    meta.level_used = Level::Global;
    meta.annotation = HierarchicalAnnotation{};
    meta.annotation.global_texts = {text};
  }
  MotionTokenGrid source;
  source.downsample = models.rqvae->config().downsample;
  source.frames = frames;
  source.tokens = Eigen::MatrixXi::Zero(token_length(frames, source.downsample), models.generator->layers());
  GenerationOptions effective = options;
  effective.max_level = meta.level_used;
  std::vector<int> all(static_cast<std::size_t>(source.length()));
  std::iota(all.begin(), all.end(), 0);
  result.grid = coarse_to_fine(source, all, meta.annotation, meta.level_used, models, effective, base_logits);
  result.motion = models.rqvae->decode(result.grid);
  return result;
}

std::vector<bool> parse_frame_mask(const std::string& spec, int frames, int downsample) {
  const int steps = token_length(frames, downsample);
  std::vector<bool> mask(static_cast<std::size_t>(steps), false);
  std::size_t at = 0;
  while (at <= spec.size()) {
    const std::size_t comma = std::min(spec.find(',', at), spec.size());
    const std::string range = spec.substr(at, comma - at);
    const std::size_t colon = range.find(':');
    int a = 0, b = 0;
    auto num = [&](std::string_view s, int& v) {
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      return r.ec == std::errc{} && r.ptr == s.data() + s.size() && !s.empty();
    };
    if (colon == std::string::npos || !num(std::string_view(range).substr(0, colon), a) ||
        !num(std::string_view(range).substr(colon + 1), b))
      throw FormatError("mask range '" + range + "' is not of the form a:b");
    if (a < 0 || b > frames || a >= b)
      throw FormatError("mask range '" + range + "' must satisfy 0 <= a < b <= " + std::to_string(frames));
    for (int p = a / downsample; p * downsample < b; ++p) mask[static_cast<std::size_t>(p)] = true;
    at = comma + 1;
  }
  return mask;
}

}  // namespace kinmo
