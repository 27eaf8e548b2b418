#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kinmo/annotation.hpp"
#include "kinmo/motion.hpp"

namespace kinmo {

struct CorpusEntry {
  std::string name;
  MotionSequence motion;
  HierarchicalAnnotation annotation;
};

using Corpus = std::vector<CorpusEntry>;

// Per-channel standardization fitted over every frame of a corpus.
struct FeatureNormalizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd stddev;

  static FeatureNormalizer fit(const Corpus& corpus, double std_floor = 0.01);
  bool fitted() const { return mean.size() == layout::kFeatureDim; }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& normalized) const;
  // Inverts and clamps foot contacts into [0, 1].
  MotionSequence to_motion(const Eigen::MatrixXd& normalized) const;
};


class ReasonerClient;
struct TrajectoryConstraint;

// Directory layout:
//   manifest.txt             entry names, one per line, in corpus order
//   train.txt val.txt test.txt   optional split lists (subsets of the manifest)
//   motions/<name>.kmot
//   annotations/<name>.txt
//   constraints/<name>.traj  optional
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
void save_constraints(const std::filesystem::path& dir, const Corpus& corpus,
                      const std::vector<TrajectoryConstraint>& constraints);
void save_split(const std::filesystem::path& dir, const std::string& split, const std::vector<std::string>& names);
// split "all" reads the manifest; anything else reads <split>.txt.
Corpus load_corpus(const std::filesystem::path& dir, const std::string& split = "all");
// Entries without a constraint file are skipped; names returned alongside.
std::vector<std::pair<std::string, TrajectoryConstraint>> load_constraints(const std::filesystem::path& dir,
                                                                           const Corpus& corpus);

struct IngestResult {
  Corpus corpus;
  std::vector<std::string> train, val, test;
};

// HumanML3D layout: new_joint_vecs/<id>.npy (T x 263), texts/<id>.txt with
// "caption#tokens#start#end" lines, and train/val/test.txt split lists.
// Missing split lists fall back to an 80/5/15 split over sorted ids. Joint and
// interaction texts come from annotations/<id>.txt when present, else `reasoner`.
IngestResult ingest_humanml3d(const std::filesystem::path& dir, ReasonerClient& reasoner);

// Reflects the motion across x and swaps left/right texts.
CorpusEntry mirror_entry(const CorpusEntry& entry);

}  // namespace kinmo
