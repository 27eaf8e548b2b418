#pragma once

#include <array>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kinmo/annotation.hpp"
#include "kinmo/annotator.hpp"
#include "kinmo/checkpoint.hpp"
#include "kinmo/config.hpp"
#include "kinmo/corpus.hpp"
#include "kinmo/nn/layers.hpp"

namespace kinmo {

enum class Level { Global, Joint, Interaction };
inline constexpr std::array<Level, 3> kAllLevels = {Level::Global, Level::Joint, Level::Interaction};
std::string_view to_string(Level level);
Level parse_level(std::string_view name);

struct Gaussian {
  nn::Var mean;    // rows x d
  nn::Var stddev;  // rows x d, strictly positive
};

struct LatentTriple {
  nn::Var global, joint, inter;
  const nn::Var& at(Level level) const;
};

struct AlignmentLossWeights {
  double nce = 0.1;
  double kl = 1e-5;
  double embedding = 1e-5;
  double reconstruction = 1.0;
  double temperature = 0.1;
};

struct AlignConfig {
  int latent_dim = 32;
  int depth = 2;
  int heads = 4;
  int ff_dim = 64;
  int vocab_buckets = 1024;
  int max_tokens = 48;
  int epochs = 80;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double negative_filter = 0.8;
  AlignmentLossWeights weights;

  static AlignConfig from(const Config& config);
  Config to_config() const;
  static std::set<std::string> keys();
};

// ---- loss building blocks ----

// softmax(z_low z_coarse^T / sqrt(d_k)) z_coarse
nn::Var cross_attention_fuse(const nn::Var& z_low, const nn::Var& z_coarse, int d_k);

// z_global = mu_c, z_joint = mu_c + mu_j + gamma*sigma_j, z_inter = z_joint + mu_i + gamma*sigma_i
LatentTriple progressive_fuse(const Gaussian& coarse, const Gaussian& joint, const Gaussian& inter,
                              const nn::Var& gamma);
LatentTriple progressive_fuse(const Gaussian& coarse, const Gaussian& joint, const Gaussian& inter);

nn::Var similarity_matrix(const nn::Var& z_text, const nn::Var& z_motion);
Eigen::MatrixXd similarity_matrix(const Eigen::MatrixXd& z_text, const Eigen::MatrixXd& z_motion);

// true marks an off-diagonal entry removed from both softmax denominators.
using NegativeMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
nn::Var infonce(const nn::Var& s, double temperature, const NegativeMask* filter = nullptr);
// Pairs whose caption embeddings have cosine >= threshold are masked.
NegativeMask negative_filter_mask(const std::vector<std::string>& captions, const TextEmbedder& embedder,
                                  double threshold);

// KL(p || q) summed over dims, averaged over rows.
nn::Var gaussian_kl(const Gaussian& p, const Gaussian& q);
// KL(t||m) + KL(m||t) + KL(t||N) + KL(m||N)
nn::Var kl_regularizers(const Gaussian& text, const Gaussian& motion);
nn::Var embedding_similarity_loss(const nn::Var& z_text, const nn::Var& z_motion);
nn::Var reconstruction_loss(const nn::Var& decoded, const nn::Var& target);

// ---- networks ----

class TextBackbone {
 public:
  virtual ~TextBackbone() = default;
  // Token features, one row per token (at least one row).
  virtual nn::Var encode(std::string_view text) const = 0;
  virtual int dimension() const = 0;
};

// Hashed word embeddings plus learned positions.
class HashedTokenBackbone final : public TextBackbone {
 public:
  HashedTokenBackbone() = default;
  HashedTokenBackbone(int buckets, int max_tokens, int dim, Rng& rng);
  nn::Var encode(std::string_view text) const override;
  int dimension() const override { return dim_; }
  void visit(const std::string& prefix, const nn::ParamVisitor& f);

 private:
  nn::Embedding words_, positions_;
  int buckets_ = 0, max_tokens_ = 0, dim_ = 0;
};

// Transformer with two learned distribution tokens read out as (mu, sigma).
class DistributionEncoder {
 public:
  DistributionEncoder() = default;
  DistributionEncoder(int in_dim, const AlignConfig& config, Rng& rng);
  Gaussian operator()(const nn::Var& tokens) const;
  void visit(const std::string& prefix, const nn::ParamVisitor& f);

 private:
  nn::Linear input_;
  nn::Var dist_tokens_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm norm_;
};

class MotionDecoder {
 public:
  MotionDecoder() = default;
  MotionDecoder(const AlignConfig& config, Rng& rng);
  // latent 1 x d -> frames x 263 normalized features
  nn::Var operator()(const nn::Var& latent, int frames) const;
  void visit(const std::string& prefix, const nn::ParamVisitor& f);

 private:
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm norm_;
  nn::Linear output_;
};

struct TextEncoding {
  Gaussian global, joint, inter;
  LatentTriple fused;
  // Token features after fusion, usable as generator context.
  nn::Var global_tokens, joint_tokens, inter_tokens;
  Gaussian distribution(Level level) const;
};

class AlignmentModel {
 public:
  AlignmentModel() = default;
  AlignmentModel(const AlignConfig& config, FeatureNormalizer normalizer, Rng& rng);

  // Levels finer than `depth` are skipped and left empty.
  TextEncoding encode_text(const HierarchicalAnnotation& annotation, std::size_t caption = 0,
                           Level depth = Level::Interaction) const;
  Gaussian encode_motion(const MotionSequence& motion) const;
  Gaussian encode_normalized(const nn::Var& normalized) const;
  nn::Var decode(const nn::Var& latent, int frames) const;

  const AlignConfig& config() const { return config_; }
  const FeatureNormalizer& normalizer() const { return normalizer_; }
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
  // Rounds weights and normalizer through float32, matching a saved copy.
  void round_to_stored_precision();

  Checkpoint to_checkpoint() const;
  static AlignmentModel from_checkpoint(const Checkpoint& ckpt);

 private:
  AlignConfig config_;
  FeatureNormalizer normalizer_;
  HashedTokenBackbone backbone_;
  nn::Embedding group_embedding_, pair_embedding_;
  DistributionEncoder global_encoder_, joint_encoder_, inter_encoder_, motion_encoder_;
  MotionDecoder decoder_;
  nn::Var gamma_;
};

inline constexpr const char* kAlignmentComponent = "alignment";

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  std::vector<std::pair<std::string, double>> terms;
};
using EpochCallback = std::function<void(const EpochLog&)>;

struct AlignmentTrainResult {
  AlignmentModel model;
  std::vector<EpochLog> log;
};

AlignmentTrainResult train_alignment(const Corpus& corpus, const AlignConfig& config, std::uint64_t seed,
                                     const EpochCallback& on_epoch = {});

Eigen::VectorXd embed_text(const HierarchicalAnnotation& annotation, Level level,
                           const AlignmentModel& model);
Eigen::VectorXd embed_motion(const MotionSequence& motion, const AlignmentModel& model);

}  // namespace kinmo
