#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "kinmo/annotation.hpp"
#include "kinmo/motion.hpp"
#include "kinmo/skeleton.hpp"

namespace kinmo {

struct KeyframeSet {
  std::vector<int> indices;  // strictly increasing, starts at 0
  double threshold_used = 0.9;
};

inline constexpr double kDefaultKeyframeThreshold = 0.9;

// Frame 0 is a keyframe; frame t is one when its cosine to the most recent
// keyframe falls below `threshold`. Rows must be unit vectors.
KeyframeSet select_keyframes(const Eigen::MatrixXd& embeddings, double threshold);

enum class Axis { X, Y, Z };

struct WindowSummary {
  Vec3 displacement = Vec3::Zero();  // P_g(t1) - P_g(t0)
  double mean_speed = 0.0;           // mean |V_g| over [t0, t1)
  Axis dominant_axis = Axis::X;      // largest |displacement|; ties prefer x, then y
};

WindowSummary window_motion_estimate(const MotionSequence& motion, KinematicGroup group, int t0,
                                     int t1, const JointSkeleton& skeleton);

// Group-pair distance over a window.
struct InteractionWindow {
  double start_distance = 0.0;
  double end_distance = 0.0;
};

// --- pluggable clients ---

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual int dimension() const = 0;
  // Unit-norm, deterministic per input.
  virtual Eigen::VectorXd embed(std::string_view text) const = 0;
};

// Signed feature hashing of word unigrams and bigrams. Stands in for a
// sentence-embedding network.
class HashingTextEmbedder final : public TextEmbedder {
 public:
  explicit HashingTextEmbedder(int dimension = 256) : dimension_(dimension) {}
  int dimension() const override { return dimension_; }
  Eigen::VectorXd embed(std::string_view text) const override;

 private:
  int dimension_;
};

class PoseDescriber {
 public:
  virtual ~PoseDescriber() = default;
  virtual std::string describe(const MotionSequence& motion, int frame,
                               const JointSkeleton& skeleton) const = 0;
};

// Buckets arm elevation, knee flexion and trunk lean into short phrases.
class RuleBasedPoseDescriber final : public PoseDescriber {
 public:
  std::string describe(const MotionSequence& motion, int frame,
                       const JointSkeleton& skeleton) const override;
};

struct AuditEntry {
  std::string request;
  std::string response;
  std::string reviewer_notes;
};

// Produces joint-group and interaction texts. Calls may arrive from several
// threads; the audit log is internally synchronized.
class AnnotatorClient {
 public:
  virtual ~AnnotatorClient() = default;
  virtual std::string describe(KinematicGroup group, const std::vector<WindowSummary>& windows,
                               const std::vector<std::string>& pose_texts) = 0;
  virtual std::string describe_interaction(GroupPair pair,
                                           const std::vector<InteractionWindow>& windows,
                                           const std::vector<std::string>& pose_texts) = 0;

  std::vector<AuditEntry> audit_log() const;
  // Reviewer feedback attaches to an existing entry; entries are never removed.
  void add_review_note(std::size_t entry, const std::string& notes);

 protected:
  void record(std::string request, std::string response);

 private:
  mutable std::mutex mutex_;
  std::vector<AuditEntry> log_;
};

// Deterministic template annotator.
class StubAnnotator final : public AnnotatorClient {
 public:
  std::string describe(KinematicGroup group, const std::vector<WindowSummary>& windows,
                       const std::vector<std::string>& pose_texts) override;
  std::string describe_interaction(GroupPair pair, const std::vector<InteractionWindow>& windows,
                                   const std::vector<std::string>& pose_texts) override;

  static constexpr double kStillDisplacement = 0.02;  // m
  static constexpr std::string_view kStillText = "remains still";
};

// JSON-over-HTTP annotator. POSTs {"kind","target","windows","pose_texts"}
// and expects {"text": "..."}; the API key, when set, goes in a bearer header.
class RemoteAnnotator final : public AnnotatorClient {
 public:
  RemoteAnnotator(std::string endpoint, std::string api_key, int timeout_seconds = 30);
  std::string describe(KinematicGroup group, const std::vector<WindowSummary>& windows,
                       const std::vector<std::string>& pose_texts) override;
  std::string describe_interaction(GroupPair pair, const std::vector<InteractionWindow>& windows,
                                   const std::vector<std::string>& pose_texts) override;

  static constexpr const char* kApiKeyEnv = "KINMO_ANNOTATOR_API_KEY";

 private:
  std::string post(const std::string& body);

  std::string endpoint_;
  std::string api_key_;
  int timeout_seconds_;
};

struct AnnotateOptions {
  double keyframe_threshold = kDefaultKeyframeThreshold;
  int max_retries = 2;
};

// Keyframes from embedded pose texts, windowed group summaries between
// consecutive keyframes, then 6 + 15 texts from the annotator. Each client
// call is retried up to `max_retries` times before AnnotationBackendError.
HierarchicalAnnotation annotate_sequence(const MotionSequence& motion,
                                         const std::vector<std::string>& global_texts,
                                         const TextEmbedder& embedder,
                                         const PoseDescriber& pose_describer,
                                         AnnotatorClient& annotator,
                                         const JointSkeleton& skeleton,
                                         const AnnotateOptions& options = {});

}  // namespace kinmo
