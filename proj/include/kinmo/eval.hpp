#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kinmo/alignment.hpp"
#include "kinmo/constraint.hpp"

namespace kinmo {

// ---- retrieval ----

struct RetrievalProtocol {
  enum class Kind { All, AllThreshold, DissimilarSubset, SmallBatches };
  Kind kind = Kind::All;
  double threshold = 0.8;  // AllThreshold
  int subset = 100;        // DissimilarSubset
  int batch = 32;          // SmallBatches
  std::uint64_t seed = 0;  // SmallBatches shuffling

  static RetrievalProtocol all() { return {}; }
  static RetrievalProtocol all_threshold(double threshold = 0.8);
  static RetrievalProtocol dissimilar_subset(int n = 100);
  static RetrievalProtocol small_batches(int batch = 32, std::uint64_t seed = 0);

  std::string name() const;
  static RetrievalProtocol parse(const std::string& name);
  void validate() const;
};

inline constexpr std::array<int, 5> kRecallRanks = {1, 2, 3, 5, 10};

struct RetrievalReport {
  std::string direction;              // "text_to_motion" or "motion_to_text"
  std::map<int, double> recall_at;    // k -> percentage
  double med_rank = 0.0;
};

struct RetrievalResult {
  RetrievalReport text_to_motion, motion_to_text;
};

// 1-based rank of item i in row i of `scores`, best first; ties go to the
// lower index. Transpose `scores` for the other direction.
std::vector<int> ground_truth_ranks(const Eigen::MatrixXd& scores);

// S(i, j) = similarity of text i and motion j. `text_sims(i, j)` is the
// caption similarity used by AllThreshold and DissimilarSubset.
RetrievalResult retrieval_report(const Eigen::MatrixXd& similarity, const RetrievalProtocol& protocol,
                                 const std::optional<Eigen::MatrixXd>& text_sims = std::nullopt);

// ---- generation ----

struct FeatureMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Sample mean and unbiased covariance of the rows; needs two or more rows.
FeatureMoments feature_moments(const Eigen::MatrixXd& features);

// Symmetric PSD square root; eigenvalues below -1e-8 (relative) raise InvalidCovariance.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

double fid(const Eigen::VectorXd& mean1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mean2,
           const Eigen::MatrixXd& cov2);
double fid(const FeatureMoments& a, const FeatureMoments& b);

struct RPrecision {
  double top1 = 0.0, top2 = 0.0, top3 = 0.0;
};

// Rows are paired; items are shuffled by `seed` into disjoint pools of `pool`
// (the remainder is dropped) and each text ranks the pool's motions by
// Euclidean distance.
RPrecision r_precision(const Eigen::MatrixXd& text_feats, const Eigen::MatrixXd& motion_feats, int pool = 32,
                       std::uint64_t seed = 0);

double mm_dist(const Eigen::MatrixXd& text_feats, const Eigen::MatrixXd& motion_feats);

// Mean distance over `pairs` disjoint rows pairs drawn by a seeded shuffle.
double diversity(const Eigen::MatrixXd& features, int pairs = 30, std::uint64_t seed = 0);

// Mean pairwise distance within each group (rows = repeats of one caption),
// averaged over groups.
double mmodality(const std::vector<Eigen::MatrixXd>& groups);

struct GenerationReport {
  double fid = 0.0;
  RPrecision r_precision;
  double mm_dist = 0.0;
  double diversity = 0.0;
  double mmodality = 0.0;
};

// ---- control ----

struct ControlReport {
  double traj_err_50cm = 0.0;
  double loc_err_50cm = 0.0;
  double avg_err = 0.0;
};

// `pred_global[s]` is T x 66 global positions for sample s. Samples without
// active entries are left out; no active entries at all raises EmptyMask.
ControlReport control_metrics(const std::vector<Eigen::MatrixXd>& pred_global,
                              const std::vector<TrajectoryConstraint>& constraints, double threshold = 0.5);
ControlReport control_metrics(const std::vector<MotionSequence>& pred, const std::vector<TrajectoryConstraint>& constraints,
                              const JointSkeleton& skeleton, double threshold = 0.5);

// ---- editing ----

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Cosine between the edited motion's embedding and the global-level embedding of `target_text`.
double htma_s(const MotionSequence& edited, const std::string& target_text, const AlignmentModel& alignment);

// ---- reports ----

// Flat key -> value document; values are numbers or strings.
class MetricReport {
 public:
  void set(const std::string& key, double value) { numbers_[key] = value; }
  void set(const std::string& key, const std::string& value) { strings_[key] = value; }
  void add(const RetrievalResult& r, const std::string& prefix = "");
  void add(const GenerationReport& g);
  void add(const ControlReport& c);

  double number(const std::string& key) const;
  std::string dump() const;  // JSON object, keys sorted
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, double> numbers_;
  std::map<std::string, std::string> strings_;
};

}  // namespace kinmo
