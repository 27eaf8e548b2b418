#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kinmo/alignment.hpp"
#include "kinmo/reasoner.hpp"
#include "kinmo/rqvae.hpp"

namespace kinmo {

struct GenConfig {
  int dim = 64;
  int depth = 3;
  int heads = 4;
  int ff_dim = 128;
  int residual_depth = 1;
  int epochs = 150;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double cond_dropout = 0.1;
  double guidance = 4.0;
  double remask_ratio = 0.4;
  int stage1_iterations = 10;
  int stage2_iterations = 4;
  int stage3_iterations = 4;
  // Softmax temperature when sampling tokens; 0 takes the argmax.
  double temperature = 1.0;

  static GenConfig from(const Config& config);
  Config to_config() const;
  static std::set<std::string> keys();
};

// cos(pi t / 2) for t in [0, 1].
double mask_schedule(double t);

// Condition rows handed to the generators. Rows are appended per level as
// [level latent; level tokens], so a finer level extends a coarser one.
struct ConditionTokens {
  Level level = Level::Global;
  bool unconditional = false;
  nn::Matrix rows;        // n x latent_dim
  std::vector<int> kinds; // one per row, in [0, kConditionKinds)
  int global_rows = 0;    // leading rows that belong to level G

  static ConditionTokens null();
};
inline constexpr int kConditionKinds = 7;  // z/tokens per level plus the null row

ConditionTokens condition_tokens(const HierarchicalAnnotation& annotation, Level level,
                                 const AlignmentModel& alignment, std::size_t caption = 0);

// Projects condition rows to the model width and fuses every row with the
// level-G rows through one cross-attention layer.
class ConditionEncoder {
 public:
  ConditionEncoder() = default;
  ConditionEncoder(int latent_dim, int dim, int heads, Rng& rng);
  nn::Var operator()(const ConditionTokens& cond) const;
  void visit(const std::string& prefix, const nn::ParamVisitor& f);

 private:
  nn::Linear project_;
  nn::Embedding kinds_;
  nn::LayerNorm norm_;
  nn::MultiHeadAttention fuse_;
};

// Bidirectional transformer over [condition rows; base-layer tokens].
class MaskedGenerator {
 public:
  MaskedGenerator() = default;
  MaskedGenerator(const GenConfig& config, int latent_dim, int codebook_size, Rng& rng);

  int mask_id() const { return codebook_size_; }
  int codebook_size() const { return codebook_size_; }
  int depth() const { return static_cast<int>(blocks_.size()); }

  // Pieces exposed for the control branch, which interleaves its own blocks.
  nn::Var embed(std::span<const int> ids, const ConditionTokens& cond) const;
  const nn::TransformerBlock& block(int b) const { return blocks_[static_cast<std::size_t>(b)]; }
  nn::Var head(const nn::Var& hidden, int motion_rows) const;

  // T' x K logits.
  nn::Var logits(std::span<const int> ids, const ConditionTokens& cond) const;
  void visit(const std::string& prefix, const nn::ParamVisitor& f);

 private:
  ConditionEncoder condition_;
  nn::Embedding tokens_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm norm_;
  nn::Linear out_;
  int dim_ = 0;
  int codebook_size_ = 0;
};

// Predicts residual layer q from the sum of embeddings of layers < q.
class ResidualTransformer {
 public:
  ResidualTransformer() = default;
  ResidualTransformer(const GenConfig& config, int latent_dim, int layers, int codebook_size, Rng& rng);
  nn::Var logits(const Eigen::MatrixXi& tokens, int layer, const ConditionTokens& cond) const;
  void visit(const std::string& prefix, const nn::ParamVisitor& f);

 private:
  ConditionEncoder condition_;
  std::vector<nn::Embedding> tokens_;
  nn::Embedding layer_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm norm_;
  std::vector<nn::Linear> heads_;
  int dim_ = 0;
};

class GeneratorModel {
 public:
  GeneratorModel() = default;
  GeneratorModel(const GenConfig& config, int latent_dim, int layers, int codebook_size, Rng& rng);

  const GenConfig& config() const { return config_; }
  int layers() const { return layers_; }
  int codebook_size() const { return codebook_size_; }
  int latent_dim() const { return latent_dim_; }
  const MaskedGenerator& base() const { return base_; }
  const ResidualTransformer& residual() const { return residual_; }

  void visit(const std::string& prefix, const nn::ParamVisitor& f);
  void round_to_stored_precision();
  Checkpoint to_checkpoint() const;
  static GeneratorModel from_checkpoint(const Checkpoint& ckpt);

 private:
  GenConfig config_;
  int latent_dim_ = 0, layers_ = 0, codebook_size_ = 0;
  MaskedGenerator base_;
  ResidualTransformer residual_;
};

inline constexpr const char* kGeneratorComponent = "generator";

struct TokenizedEntry {
  MotionTokenGrid grid;
  HierarchicalAnnotation annotation;
};

// Condition rows per entry, per caption, per level.
using LevelConditions = std::array<ConditionTokens, 3>;
std::vector<std::vector<LevelConditions>> precompute_conditions(const std::vector<TokenizedEntry>& data,
                                                                const AlignmentModel& alignment);

// Rng-chosen subset of `count` positions out of n, in increasing order.
std::vector<int> choose_positions(int n, int count, Rng& rng);

struct GeneratorTrainResult {
  GeneratorModel model;
  std::vector<EpochLog> log;
};

GeneratorTrainResult train_generator(const std::vector<TokenizedEntry>& data, const AlignmentModel& alignment,
                                     int codebook_size, const GenConfig& config, std::uint64_t seed,
                                     const EpochCallback& on_epoch = {});

// Fraction of masked base tokens predicted correctly (argmax, level `level`),
// with `fraction` of each sequence masked at fixed rng-chosen positions.
double masked_token_accuracy(const std::vector<TokenizedEntry>& data, const GeneratorModel& model,
                             const AlignmentModel& alignment, Level level, double fraction, std::uint64_t seed);

// ---- sampling ----

// Base-layer logits for (ids, condition); the control branch swaps this out.
using BaseLogitsFn = std::function<nn::Matrix(std::span<const int>, const ConditionTokens&)>;

// u + s (c - u), exact u when s == 0.
nn::Matrix guided_logits(const nn::Matrix& conditional, const nn::Matrix& unconditional, double scale);

struct GenerationOptions {
  Level max_level = Level::Interaction;
  std::uint64_t seed = 0;
  std::optional<double> guidance, remask_ratio, temperature;
};

struct GenerationMetadata {
  Level level_used = Level::Global;
  bool reasoner_fallback = false;
  std::string reasoner_error;
  HierarchicalAnnotation annotation;
  std::uint64_t seed = 0;
  int frames = 0;
};

struct GenerationModels {
  const AlignmentModel* alignment = nullptr;
  const RqvaeModel* rqvae = nullptr;
  const GeneratorModel* generator = nullptr;
};

// Positions where `frame_mask` is true are re-predicted; the rest keep the
// source tokens bit-exactly. An all-false mask returns the source.
MotionTokenGrid edit_infill(const MotionTokenGrid& source, const std::vector<bool>& frame_mask,
                            const HierarchicalAnnotation& annotation, const GenerationModels& models,
                            const GenerationOptions& options, const BaseLogitsFn& base_logits = {});

struct GenerationResult {
  MotionTokenGrid grid;
  MotionSequence motion;
  GenerationMetadata metadata;
};

// Expands `text` with the reasoner (falling back to level G when it fails)
// and runs coarse-to-fine generation of `frames` frames.
GenerationResult generate(const std::string& text, ReasonerClient& reasoner, const GenerationModels& models,
                          int frames, const GenerationOptions& options, const BaseLogitsFn& base_logits = {});

// Token positions covered by frame ranges "a:b" (half-open, comma-separated).
std::vector<bool> parse_frame_mask(const std::string& spec, int frames, int downsample);

}  // namespace kinmo
