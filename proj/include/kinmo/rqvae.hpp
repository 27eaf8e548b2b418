#pragma once

#include <set>
#include <string>
#include <vector>

#include "kinmo/alignment.hpp"
#include "kinmo/checkpoint.hpp"
#include "kinmo/config.hpp"
#include "kinmo/corpus.hpp"
#include "kinmo/nn/layers.hpp"

namespace kinmo {

struct RqvaeConfig {
  int layers = 3;
  int codebook_size = 64;
  int code_dim = 32;
  int downsample = 4;
  int hidden = 64;
  int epochs = 300;
  int batch_size = 8;
  double learning_rate = 2e-3;
  double commitment = 0.02;
  // Probability that a training sample is decoded from a random prefix of layers.
  double quantizer_dropout = 0.2;
  int kmeans_iterations = 10;
  // Codebooks follow an exponential moving average of their assigned residuals.
  double ema_decay = 0.9;

  static RqvaeConfig from(const Config& config);
  Config to_config() const;
  static std::set<std::string> keys();
};

struct MotionTokenGrid {
  Eigen::MatrixXi tokens;  // T' x Q
  int downsample = 4;
  int frames = 0;          // T before downsampling

  int length() const { return static_cast<int>(tokens.rows()); }
  int layers() const { return static_cast<int>(tokens.cols()); }
  void validate(int codebook_size) const;
  bool operator==(const MotionTokenGrid&) const = default;
};

int token_length(int frames, int downsample);

struct Quantization {
  Eigen::MatrixXi tokens;  // n x layers
  nn::Matrix quantized;    // n x code_dim, sum of the selected codes
};

class ResidualCodebooks {
 public:
  ResidualCodebooks() = default;
  // One K x code_dim matrix per layer.
  explicit ResidualCodebooks(const std::vector<nn::Matrix>& codes);

  int layers() const { return static_cast<int>(codes_.size()); }
  int codebook_size() const { return codes_.empty() ? 0 : static_cast<int>(codes_[0].rows()); }
  int code_dim() const { return codes_.empty() ? 0 : static_cast<int>(codes_[0].cols()); }
  const nn::Matrix& codes(int layer) const { return codes_[static_cast<std::size_t>(layer)].value(); }
  const nn::Var& code_var(int layer) const { return codes_[static_cast<std::size_t>(layer)]; }
  nn::Var& code_var(int layer) { return codes_[static_cast<std::size_t>(layer)]; }

  // Layer q picks the code nearest to what layers < q left over. Ties go to
  // the lower index. `use_layers` < 0 means all.
  Quantization quantize(const nn::Matrix& z, int use_layers = -1) const;
  nn::Matrix lookup(const Eigen::MatrixXi& tokens, int use_layers = -1) const;
  nn::Var lookup_var(const Eigen::MatrixXi& tokens, int use_layers = -1) const;
  // Throws InvalidMotion on duplicate rows within a layer or non-finite entries.
  void validate() const;

  void visit(const std::string& prefix, const nn::ParamVisitor& f);

 private:
  std::vector<nn::Var> codes_;
};

class RqvaeModel {
 public:
  RqvaeModel() = default;
  RqvaeModel(const RqvaeConfig& config, FeatureNormalizer normalizer, Rng& rng);

  bool fitted() const { return fitted_; }
  const RqvaeConfig& config() const { return config_; }
  const FeatureNormalizer& normalizer() const { return normalizer_; }
  const ResidualCodebooks& codebooks() const { return codebooks_; }
  ResidualCodebooks& codebooks() { return codebooks_; }

  // Normalized T x 263 -> T' x code_dim (input padded by repeating the last frame).
  nn::Var encode_latent(const nn::Matrix& normalized) const;
  // T' x code_dim -> normalized frames x 263.
  nn::Var decode_latent(const nn::Var& latent, int frames) const;

  MotionTokenGrid encode(const MotionSequence& motion) const;
  nn::Matrix decode_normalized(const MotionTokenGrid& grid, int use_layers = -1) const;
  MotionSequence decode(const MotionTokenGrid& grid, int use_layers = -1) const;

  void visit(const std::string& prefix, const nn::ParamVisitor& f);
  void mark_fitted() { fitted_ = true; }
  void round_to_stored_precision();

  Checkpoint to_checkpoint() const;
  static RqvaeModel from_checkpoint(const Checkpoint& ckpt);

 private:
  void require_fitted() const;

  RqvaeConfig config_;
  FeatureNormalizer normalizer_;
  nn::Conv1d enc_in_, enc_down_, enc_mid_;
  nn::Linear enc_out_;
  nn::Linear dec_in_;
  nn::Conv1d dec_mid_;
  nn::Linear dec_up_;
  nn::Conv1d dec_smooth_;
  nn::Linear dec_out_;
  ResidualCodebooks codebooks_;
  bool fitted_ = false;
};

inline constexpr const char* kRqvaeComponent = "rqvae";

MotionTokenGrid rqvae_encode(const MotionSequence& motion, const RqvaeModel& model);
MotionSequence rqvae_decode(const MotionTokenGrid& grid, const RqvaeModel& model);

struct RqvaeTrainResult {
  RqvaeModel model;
  std::vector<EpochLog> log;
};

RqvaeTrainResult train_rqvae(const Corpus& corpus, const RqvaeConfig& config, std::uint64_t seed,
                             const EpochCallback& on_epoch = {});

// Deterministic k-means with k-means++ seeding; returns k x d centers with no
// duplicate rows (points are jittered when there are fewer distinct points than k).
nn::Matrix kmeans(const nn::Matrix& points, int k, int iterations, Rng& rng);

}  // namespace kinmo
