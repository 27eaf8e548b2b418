#pragma once

#include <set>
#include <string>
#include <vector>

#include "kinmo/constraint.hpp"
#include "kinmo/generator.hpp"

namespace kinmo {

struct ControlConfig {
  int epochs = 100;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double lambda_c = 1.0;
  double cond_dropout = 0.1;

  static ControlConfig from(const Config& config);
  Config to_config() const;
  static std::set<std::string> keys();
};

using JointMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Differentiable local-to-global transform: raw T x 263 features -> T x 66
// global joint positions, matching local_to_global.
nn::Var global_positions(const nn::Var& features);

// sum m ||pred - target||^2 / sum m over joints; pred and targets are T x 66.
nn::Var control_loss(const nn::Var& pred_global, const Eigen::MatrixXd& target_global, const JointMask& mask);
double control_loss(const MotionSequence& pred, const MotionSequence& target, const JointMask& mask,
                    const JointSkeleton& skeleton);

// Euclidean error of each active (frame, joint), in row-major (frame, joint) order.
Eigen::VectorXd active_errors(const Eigen::MatrixXd& pred_global, const TrajectoryConstraint& constraint);

// Convolutions over (targets, mask) per frame -> T' x dim control tokens.
class SpatialEncoder {
 public:
  SpatialEncoder() = default;
  SpatialEncoder(int dim, int downsample, Rng& rng);
  nn::Var operator()(const TrajectoryConstraint& constraint) const;
  int downsample() const { return downsample_; }
  void visit(const std::string& prefix, const nn::ParamVisitor& f);

 private:
  std::vector<nn::Conv1d> stages_;
  int downsample_ = 1;
};

// Trainable copy of the generator blocks; each copy feeds the frozen block's
// output through a zero-initialized link.
class ControlBranch {
 public:
  ControlBranch() = default;
  ControlBranch(const MaskedGenerator& frozen, int dim, int downsample, Rng& rng);

  nn::Var encode(const TrajectoryConstraint& constraint) const { return encoder_(constraint); }
  nn::Var logits(const MaskedGenerator& frozen, std::span<const int> ids, const ConditionTokens& cond,
                 const nn::Var& control_tokens) const;
  void visit(const std::string& prefix, const nn::ParamVisitor& f);

 private:
  SpatialEncoder encoder_;
  nn::Linear input_;
  std::vector<nn::TransformerBlock> blocks_;
  std::vector<nn::Linear> links_;
};

class ControlModel {
 public:
  ControlModel() = default;
  ControlModel(const ControlConfig& config, const GeneratorModel& generator, int downsample, Rng& rng);

  const ControlConfig& config() const { return config_; }
  const ControlBranch& branch() const { return branch_; }
  std::uint64_t generator_checksum() const { return generator_checksum_; }

  // Base-layer logits with the constraint injected.
  BaseLogitsFn logits_fn(const GeneratorModel& generator, const TrajectoryConstraint& constraint) const;

  void visit(const std::string& prefix, const nn::ParamVisitor& f);
  void round_to_stored_precision();
  Checkpoint to_checkpoint() const;
  // Rejects a checkpoint trained against a different generator.
  static ControlModel from_checkpoint(const Checkpoint& ckpt, const GeneratorModel& generator);

 private:
  ControlConfig config_;
  ControlBranch branch_;
  int downsample_ = 1;
  std::uint64_t generator_checksum_ = 0;
};

inline constexpr const char* kControlComponent = "control";

std::uint64_t generator_checksum(const GeneratorModel& generator);

struct ControlEntry {
  MotionTokenGrid grid;
  HierarchicalAnnotation annotation;
  TrajectoryConstraint constraint;
};

struct ControlTrainResult {
  ControlModel model;
  std::vector<EpochLog> log;
};

// Throws FrozenWeightMutation if the generator's weights change.
ControlTrainResult train_control(const std::vector<ControlEntry>& data, const AlignmentModel& alignment,
                                 const RqvaeModel& rqvae, const GeneratorModel& generator,
                                 const ControlConfig& config, std::uint64_t seed, const EpochCallback& on_epoch = {});

struct ControlledGenerationResult {
  GenerationResult generation;
  double avg_err = 0.0;  // meters over active entries
  double max_err = 0.0;
  bool trajectory_failed = false;  // any active error > 0.5 m
};

// The motion length is the constraint's frame count; `frames` must agree when given (> 0).
ControlledGenerationResult controlled_generate(const std::string& text, const TrajectoryConstraint& constraint,
                                               int frames, ReasonerClient& reasoner, const GenerationModels& models,
                                               const ControlModel& control, const GenerationOptions& options);

}  // namespace kinmo
