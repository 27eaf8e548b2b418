#include "kinmo/control.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kinmo/error.hpp"
#include "kinmo/kinematics.hpp"

namespace kinmo {

using nn::Matrix;
using nn::Var;

ControlConfig ControlConfig::from(const Config& c) {
  ControlConfig k;
  k.epochs = c.get("control.epochs", k.epochs);
  k.batch_size = c.get("control.batch_size", k.batch_size);
  k.learning_rate = c.get("control.learning_rate", k.learning_rate);
  k.lambda_c = c.get("control.lambda_c", k.lambda_c);
  k.cond_dropout = c.get("control.cond_dropout", k.cond_dropout);
  if (k.epochs < 0 || k.batch_size < 1 || !(k.learning_rate > 0.0))
    throw ConfigError("control.epochs/batch_size/learning_rate out of range");
  if (k.lambda_c < 0.0) throw ConfigError("control.lambda_c must be nonnegative");
  if (k.cond_dropout < 0.0 || k.cond_dropout > 1.0) throw ConfigError("control.cond_dropout must lie in [0, 1]");
  return k;
}

Config ControlConfig::to_config() const {
  Config c;
  c.set("control.epochs", epochs);
  c.set("control.batch_size", batch_size);
  c.set("control.learning_rate", learning_rate);
  c.set("control.lambda_c", lambda_c);
  c.set("control.cond_dropout", cond_dropout);
  return c;
}

std::set<std::string> ControlConfig::keys() {
  std::set<std::string> out;
  const Config defaults = ControlConfig{}.to_config();
  for (const auto& [k, v] : defaults.entries()) out.insert(k);
  return out;
}

// ---- losses ----

namespace {

// 263 x 22 selector of one local-position axis; joint 0 (the root) stays zero.
const Matrix& local_axis_selector(int axis) {
  static const std::array<Matrix, 3> selectors = [] {
    std::array<Matrix, 3> s;
    for (int a = 0; a < 3; ++a) {
      s[a] = Matrix::Zero(layout::kFeatureDim, kNumJoints);
      for (int j = 1; j < kNumJoints; ++j) s[a](layout::kLocalPositions + 3 * (j - 1) + a, j) = 1.0;
    }
    return s;
  }();
  return selectors[static_cast<std::size_t>(axis)];
}

// 22 x 66 placement of one axis into interleaved (x, y, z) joint columns.
const Matrix& axis_placement(int axis) {
  static const std::array<Matrix, 3> placements = [] {
    std::array<Matrix, 3> p;
    for (int a = 0; a < 3; ++a) {
      p[a] = Matrix::Zero(kNumJoints, 3 * kNumJoints);
      for (int j = 0; j < kNumJoints; ++j) p[a](j, 3 * j + a) = 1.0;
    }
    return p;
  }();
  return placements[static_cast<std::size_t>(axis)];
}

Matrix joint_weights(const JointMask& mask) {
  Matrix w(mask.rows(), 3 * mask.cols());
  for (Eigen::Index t = 0; t < mask.rows(); ++t)
    for (Eigen::Index j = 0; j < mask.cols(); ++j) w.block(t, 3 * j, 1, 3).setConstant(mask(t, j) ? 1.0 : 0.0);
  return w;
}

}  // namespace

Var global_positions(const Var& f) {
  if (f.cols() != layout::kFeatureDim) throw DimError("global_positions expects T x 263 features");
  const Var omega = nn::slice_cols(f, layout::kRootAngularVelocity, 1);
  const Var vx = nn::slice_cols(f, layout::kRootLinearVelocity, 1);
  const Var vz = nn::slice_cols(f, layout::kRootLinearVelocity + 1, 1);
  const Var height = nn::slice_cols(f, layout::kRootHeight, 1);
  const Var yaw = nn::cumsum_rows_exclusive(omega);
  const Var c = nn::cos(yaw), s = nn::sin(yaw);
  // Root path: p(t) = sum_{k<t} R_y(yaw_k) (vx_k, 0, vz_k).
  const Var px = nn::cumsum_rows_exclusive(nn::add(nn::mul(vx, c), nn::mul(vz, s)));
  const Var pz = nn::cumsum_rows_exclusive(nn::sub(nn::mul(vz, c), nn::mul(vx, s)));
  const Var lx = nn::matmul(f, nn::constant(local_axis_selector(0)));
  const Var ly = nn::matmul(f, nn::constant(local_axis_selector(1)));
  const Var lz = nn::matmul(f, nn::constant(local_axis_selector(2)));
  const Var gx = nn::add(nn::add(nn::mul(lx, c), nn::mul(lz, s)), px);
  const Var gy = nn::add(ly, height);
  const Var gz = nn::add(nn::sub(nn::mul(lz, c), nn::mul(lx, s)), pz);
  return nn::add(nn::add(nn::matmul(gx, nn::constant(axis_placement(0))), nn::matmul(gy, nn::constant(axis_placement(1)))),
                 nn::matmul(gz, nn::constant(axis_placement(2))));
}

Var control_loss(const Var& pred_global, const Eigen::MatrixXd& target_global, const JointMask& mask) {
  if (pred_global.rows() != target_global.rows() || pred_global.cols() != target_global.cols() ||
      mask.rows() != pred_global.rows() || 3 * mask.cols() != pred_global.cols())
    throw DimError("control_loss: prediction, target and mask shapes disagree");
  const auto active = mask.count();
  if (active == 0) throw EmptyMask("control_loss needs at least one active joint");
  const Var diff = nn::sub(pred_global, nn::constant(target_global));
  return nn::scale(nn::sum_all(nn::mul(nn::square(diff), nn::constant(joint_weights(mask)))),
                   1.0 / static_cast<double>(active));
}

double control_loss(const MotionSequence& pred, const MotionSequence& target, const JointMask& mask,
                    const JointSkeleton& skeleton) {
  if (pred.frames() != target.frames()) throw DimError("control_loss: motions differ in length");
  nn::NoGradGuard guard;
  return control_loss(nn::constant(local_to_global(pred, skeleton)), local_to_global(target, skeleton), mask).item();
}

Eigen::VectorXd active_errors(const Eigen::MatrixXd& pred_global, const TrajectoryConstraint& constraint) {
  constraint.validate();
  if (pred_global.rows() != constraint.frames() || pred_global.cols() != 3 * kNumJoints)
    throw DimError("active_errors: prediction has " + std::to_string(pred_global.rows()) + " frames, constraint " +
                   std::to_string(constraint.frames()));
  Eigen::VectorXd out(constraint.active_count());
  Eigen::Index n = 0;
  for (int t = 0; t < constraint.frames(); ++t)
    for (int j = 0; j < kNumJoints; ++j)
      if (constraint.mask(t, j))
        out(n++) = (pred_global.block(t, 3 * j, 1, 3) - constraint.targets.block(t, 3 * j, 1, 3)).norm();
  return out;
}

// ---- networks ----

SpatialEncoder::SpatialEncoder(int dim, int downsample, Rng& rng) : downsample_(downsample) {
  if (downsample < 1) throw DimError("downsample must be positive");
  const int first = downsample % 2 == 0 ? 2 : downsample;
  const int strides[] = {first, downsample / first, 1};
  int in = 4 * kNumJoints;
  for (int s : strides) {
    stages_.emplace_back(in, dim, s + 2, s, 1, 1, rng);
    in = dim;
  }
}

Var SpatialEncoder::operator()(const TrajectoryConstraint& constraint) const {
  constraint.validate();
  const int frames = constraint.frames();
  const int padded = token_length(frames, downsample_) * downsample_;
  Matrix x = Matrix::Zero(padded, 4 * kNumJoints);
  for (int t = 0; t < frames; ++t)
    for (int j = 0; j < kNumJoints; ++j)
      if (constraint.mask(t, j)) {
        x.block(t, 4 * j, 1, 3) = constraint.targets.block(t, 3 * j, 1, 3);
        x(t, 4 * j + 3) = 1.0;
      }
  Var h = nn::constant(std::move(x));
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    h = stages_[s](h);
    if (s + 1 < stages_.size()) h = nn::relu(h);
  }
  return h;
}

void SpatialEncoder::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  for (std::size_t s = 0; s < stages_.size(); ++s) stages_[s].visit(prefix + "stage" + std::to_string(s) + ".", f);
}

ControlBranch::ControlBranch(const MaskedGenerator& frozen, int dim, int downsample, Rng& rng)
    : encoder_(dim, downsample, rng), input_(dim, dim, rng) {
  for (int b = 0; b < frozen.depth(); ++b) {
    blocks_.push_back(nn::deep_copy(frozen.block(b)));
    nn::set_trainable(blocks_.back(), true);
    links_.push_back(nn::Linear::zeros(dim, dim));
  }
}

Var ControlBranch::logits(const MaskedGenerator& frozen, std::span<const int> ids, const ConditionTokens& cond,
                          const Var& control_tokens) const {
  const auto steps = static_cast<Eigen::Index>(ids.size());
  if (control_tokens.rows() != steps)
    throw DimError("control tokens cover " + std::to_string(control_tokens.rows()) + " positions, motion has " +
                   std::to_string(steps));
  Var x = frozen.embed(ids, cond);
  const Var parts[] = {nn::constant(Matrix::Zero(x.rows() - steps, x.cols())), input_(control_tokens)};
  Var h = nn::add(x, nn::concat_rows(parts));
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    x = frozen.block(static_cast<int>(b))(x);
    h = blocks_[b](h);
    x = nn::add(x, links_[b](h));
  }
  return frozen.head(x, static_cast<int>(steps));
}

void ControlBranch::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  encoder_.visit(prefix + "encoder.", f);
  input_.visit(prefix + "input.", f);
  for (std::size_t b = 0; b < blocks_.size(); ++b) blocks_[b].visit(prefix + "block" + std::to_string(b) + ".", f);
  for (std::size_t b = 0; b < links_.size(); ++b) links_[b].visit(prefix + "link" + std::to_string(b) + ".", f);
}

std::uint64_t generator_checksum(const GeneratorModel& generator) {
  GeneratorModel view = generator;  // shares parameter nodes
  return nn::parameter_checksum(view);
}

ControlModel::ControlModel(const ControlConfig& config, const GeneratorModel& generator, int downsample, Rng& rng)
    : config_(config), branch_(generator.base(), generator.config().dim, downsample, rng), downsample_(downsample),
      generator_checksum_(kinmo::generator_checksum(generator)) {}

BaseLogitsFn ControlModel::logits_fn(const GeneratorModel& generator, const TrajectoryConstraint& constraint) const {
  Matrix tokens;
  {
    nn::NoGradGuard guard;
    tokens = branch_.encode(constraint).value();
  }
  return [this, &generator, tokens](std::span<const int> ids, const ConditionTokens& cond) {
    return branch_.logits(generator.base(), ids, cond, nn::constant(tokens)).value();
  };
}

void ControlModel::visit(const std::string& prefix, const nn::ParamVisitor& f) { branch_.visit(prefix, f); }

void ControlModel::round_to_stored_precision() {
  visit("", [](const std::string&, Var& v) { v.mutable_value() = to_stored_precision(v.value()); });
}

Checkpoint ControlModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.component = kControlComponent;
  ckpt.config = config_.to_config();
  ckpt.config.set("shape.downsample", downsample_);
  ckpt.config.set("shape.generator_checksum", std::to_string(generator_checksum_));
  ControlModel view = *this;
  ckpt.add_module(view, "");
  return ckpt;
}

ControlModel ControlModel::from_checkpoint(const Checkpoint& ckpt, const GeneratorModel& generator) {
  if (ckpt.component != kControlComponent)
    throw CheckpointError("expected a control checkpoint, got '" + ckpt.component + "'");
  const std::string expected = ckpt.config.get("shape.generator_checksum", std::string());
  if (expected != std::to_string(kinmo::generator_checksum(generator)))
    throw CheckpointError("control checkpoint was trained against a different generator");
  Rng rng(0);
  ControlModel model(ControlConfig::from(ckpt.config), generator, ckpt.config.get("shape.downsample", 0), rng);
  ckpt.load_module(model, "");
  nn::set_trainable(model, false);
  return model;
}

// ---- training ----

ControlTrainResult train_control(const std::vector<ControlEntry>& data, const AlignmentModel& alignment,
                                 const RqvaeModel& rqvae, const GeneratorModel& generator,
                                 const ControlConfig& config, std::uint64_t seed, const EpochCallback& on_epoch) {
  if (data.empty()) throw InvalidMotion("train_control: no sequences");
  if (!rqvae.fitted()) throw NotFitted("train_control needs a trained RQ-VAE");
  std::vector<TokenizedEntry> tokenized;
  for (const auto& e : data) {
    e.grid.validate(rqvae.config().codebook_size);
    e.constraint.validate();
    if (e.constraint.frames() != e.grid.frames)
      throw DimError("constraint has " + std::to_string(e.constraint.frames()) + " frames, motion " +
                     std::to_string(e.grid.frames));
    if (e.grid.layers() != generator.layers()) throw DimError("token grid layer count differs from the generator");
    tokenized.push_back({e.grid, e.annotation});
  }
  const std::uint64_t before = generator_checksum(generator);
  Rng rng(seed);
  ControlTrainResult result{ControlModel(config, generator, rqvae.config().downsample, rng), {}};
  ControlModel& model = result.model;
  Rng order_rng = rng.fork();
  const auto conditions = precompute_conditions(tokenized, alignment);
  const ConditionTokens null_cond = ConditionTokens::null();
  const MaskedGenerator& base = generator.base();
  const Matrix& base_codes = rqvae.codebooks().codes(0);
  const Matrix norm_std = rqvae.normalizer().stddev;
  const Matrix norm_mean = rqvae.normalizer().mean;

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
      Var ce = nn::scalar(0.0), ctrl = nn::scalar(0.0);
      for (std::size_t s = start; s < stop; ++s) {
        const auto idx = static_cast<std::size_t>(order[s]);
        const ControlEntry& e = data[idx];
        const std::size_t caption = order_rng.index(conditions[idx].size());
        const bool drop = order_rng.uniform() < config.cond_dropout;
        const ConditionTokens& cond = drop ? null_cond : conditions[idx][caption][level];

        const int steps = e.grid.length();
        const double fraction = mask_schedule(order_rng.uniform());
        const int count = std::clamp(static_cast<int>(std::ceil(fraction * steps)), 1, steps);
        std::vector<int> ids(e.grid.tokens.col(0).data(), e.grid.tokens.col(0).data() + steps);
        const std::vector<int> targets = ids;
        std::vector<double> weights(ids.size(), 0.0);
        for (int p : choose_positions(steps, count, order_rng)) {
          ids[static_cast<std::size_t>(p)] = base.mask_id();
          weights[static_cast<std::size_t>(p)] = 1.0;
        }
        const Var logits = model.branch().logits(base, ids, cond, model.branch().encode(e.constraint));
        ce = nn::add(ce, nn::cross_entropy_rows(logits, targets, weights));
        if (config.lambda_c > 0.0 && e.constraint.active_count() > 0) {
          // Masked slots decode from the probability-weighted mixture of base codes.
          const Matrix chosen = Eigen::Map<const Eigen::VectorXd>(weights.data(), steps);
          Matrix known = rqvae.codebooks().lookup(e.grid.tokens);
          Matrix known_base = rqvae.codebooks().lookup(e.grid.tokens, 1);
          for (int p = 0; p < steps; ++p)
            if (weights[static_cast<std::size_t>(p)] > 0.0) known.row(p) -= known_base.row(p);
          const Var soft = nn::mul(nn::matmul(nn::softmax_rows(logits), nn::constant(base_codes)), nn::constant(chosen));
          const Var latent = nn::add(soft, nn::constant(known));
          const Var normalized = rqvae.decode_latent(latent, e.grid.frames);
          const Var raw = nn::add(nn::mul(normalized, nn::constant(norm_std)), nn::constant(norm_mean));
          ctrl = nn::add(ctrl, control_loss(global_positions(raw), e.constraint.targets, e.constraint.mask));
        }
      }
      const double n = static_cast<double>(stop - start);
      const Var total = nn::scale(nn::add(ce, nn::scale(ctrl, config.lambda_c)), 1.0 / n);
      const double value = total.value()(0, 0);
      if (!std::isfinite(value)) throw TrainingDiverged("control", epoch);
      adam.zero_grad();
      nn::backward(total);
      adam.step();
      sums[0] += value;
      sums[1] += ce.value()(0, 0) / n;
      sums[2] += ctrl.value()(0, 0) / n;
      ++batches;
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = sums[0] / batches;
    log.terms = {{"ce", sums[1] / batches}, {"control", sums[2] / batches}};
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  if (generator_checksum(generator) != before)
    throw FrozenWeightMutation("generator weights changed during control training");
  model.round_to_stored_precision();
  nn::set_trainable(model, false);
  return result;
}

ControlledGenerationResult controlled_generate(const std::string& text, const TrajectoryConstraint& constraint,
                                               int frames, ReasonerClient& reasoner, const GenerationModels& models,
                                               const ControlModel& control, const GenerationOptions& options) {
  constraint.validate();
  if (frames > 0 && frames != constraint.frames())
    throw DimError("constraint covers " + std::to_string(constraint.frames()) + " frames, requested " +
                   std::to_string(frames));
  if (!models.generator) throw NotFitted("controlled generation needs a generator");
  if (generator_checksum(*models.generator) != control.generator_checksum())
    throw CheckpointError("control model was trained against a different generator");
  ControlledGenerationResult out;
  out.generation = generate(text, reasoner, models, constraint.frames(), options,
                            control.logits_fn(*models.generator, constraint));
  if (constraint.active_count() > 0) {
    const Eigen::VectorXd errs =
        active_errors(local_to_global(out.generation.motion, JointSkeleton::smpl22()), constraint);
    out.avg_err = errs.mean();
    out.max_err = errs.maxCoeff();
    out.trajectory_failed = out.max_err > 0.5;
  }
  return out;
}

}  // namespace kinmo
