#include "kinmo/eval.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "kinmo/rng.hpp"
#include "kinmo/toy.hpp"

namespace kinmo {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using testing::random_matrix;

TEST(Retrieval, IdentityDominant) {
  const RetrievalResult r = retrieval_report(MatrixXd::Identity(6, 6), RetrievalProtocol::all());
  for (const auto* d : {&r.text_to_motion, &r.motion_to_text}) {
    EXPECT_DOUBLE_EQ(d->recall_at.at(1), 100.0);
    EXPECT_DOUBLE_EQ(d->med_rank, 1.0);
  }
}

TEST(Retrieval, HandRanksOneTwoThree) {
  MatrixXd s(3, 3);
  s << 0.9, 0.1, 0.0,  //
      0.8, 0.5, 0.2,   //
      0.7, 0.6, 0.1;
  const RetrievalResult r = retrieval_report(s, RetrievalProtocol::all());
  EXPECT_EQ(ground_truth_ranks(s), (std::vector<int>{1, 2, 3}));
  EXPECT_NEAR(r.text_to_motion.recall_at.at(1), 100.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.text_to_motion.recall_at.at(2), 200.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.text_to_motion.recall_at.at(3), 100.0);
  EXPECT_DOUBLE_EQ(r.text_to_motion.med_rank, 2.0);
}

TEST(Retrieval, TiesGoToLowerIndex) {
  const MatrixXd s = MatrixXd::Constant(4, 4, 0.5);
  EXPECT_EQ(ground_truth_ranks(s), (std::vector<int>{1, 2, 3, 4}));
}

std::vector<int> brute_force_ranks(const MatrixXd& s) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    std::vector<std::pair<double, Eigen::Index>> row;
    for (Eigen::Index j = 0; j < s.cols(); ++j) row.emplace_back(-s(i, j), j);
    std::sort(row.begin(), row.end());
    for (std::size_t r = 0; r < row.size(); ++r)
      if (row[r].second == i) out.push_back(static_cast<int>(r) + 1);
  }
  return out;
}

TEST(Retrieval, MatchesBruteForceSorting) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXd s = random_matrix(10, 10, rng);
    if (trial % 2 == 0) s = s.array().round() / 2.0;  // plenty of ties
    EXPECT_EQ(ground_truth_ranks(s), brute_force_ranks(s));
    EXPECT_EQ(ground_truth_ranks(s.transpose()), brute_force_ranks(s.transpose()));
  }
}

TEST(Retrieval, RecallMonotoneAndBounded) {
  Rng rng(2);
  const RetrievalResult r = retrieval_report(random_matrix(40, 40, rng), RetrievalProtocol::all());
  double previous = 0.0;
  for (int k : kRecallRanks) {
    const double v = r.motion_to_text.recall_at.at(k);
    EXPECT_GE(v, previous);
    EXPECT_LE(v, 100.0);
    previous = v;
  }
  EXPECT_GE(r.text_to_motion.med_rank, 1.0);
}

TEST(Retrieval, ThresholdWithIdenticalCaptionsAlwaysHits) {
  Rng rng(3);
  const MatrixXd s = random_matrix(12, 12, rng);
  const RetrievalResult r =
      retrieval_report(s, RetrievalProtocol::all_threshold(0.8), MatrixXd::Ones(12, 12));
  EXPECT_DOUBLE_EQ(r.text_to_motion.recall_at.at(1), 100.0);
  EXPECT_DOUBLE_EQ(r.motion_to_text.recall_at.at(1), 100.0);
  EXPECT_THROW(retrieval_report(s, RetrievalProtocol::all_threshold()), DimError);
}

TEST(Retrieval, ThresholdWithDistinctCaptionsEqualsAll) {
  Rng rng(4);
  const MatrixXd s = random_matrix(9, 9, rng);
  const auto a = retrieval_report(s, RetrievalProtocol::all());
  const auto t = retrieval_report(s, RetrievalProtocol::all_threshold(), MatrixXd::Identity(9, 9));
  EXPECT_EQ(a.text_to_motion.recall_at, t.text_to_motion.recall_at);
  EXPECT_EQ(a.motion_to_text.med_rank, t.motion_to_text.med_rank);
}

TEST(Retrieval, DissimilarSubsetKeepsLeastSimilarItems) {
  // Items 0 and 1 share a caption; subset of 2 keeps items 2 and 3, whose
  // ground truth is retrieved perfectly even though 0/1 are confused.
  MatrixXd sims = MatrixXd::Identity(4, 4) * 1.0;
  sims(0, 1) = sims(1, 0) = 0.95;
  sims(2, 3) = sims(3, 2) = 0.1;
  MatrixXd s = MatrixXd::Identity(4, 4);
  s(0, 1) = s(1, 0) = 2.0;
  const auto full = retrieval_report(s, RetrievalProtocol::all());
  EXPECT_DOUBLE_EQ(full.text_to_motion.recall_at.at(1), 50.0);
  const auto sub = retrieval_report(s, RetrievalProtocol::dissimilar_subset(2), sims);
  EXPECT_DOUBLE_EQ(sub.text_to_motion.recall_at.at(1), 100.0);
}

TEST(Retrieval, SmallBatchesPoolRanks) {
  Rng rng(5);
  const MatrixXd s = random_matrix(70, 70, rng);
  const auto r = retrieval_report(s, RetrievalProtocol::small_batches(32, 9), std::nullopt);
  EXPECT_GE(r.text_to_motion.med_rank, 1.0);
  EXPECT_LE(r.text_to_motion.med_rank, 32.0);
  const auto id = retrieval_report(MatrixXd::Identity(64, 64), RetrievalProtocol::small_batches(32, 9));
  EXPECT_DOUBLE_EQ(id.text_to_motion.recall_at.at(1), 100.0);
  EXPECT_THROW(retrieval_report(MatrixXd::Identity(8, 8), RetrievalProtocol::small_batches(32)), InsufficientSamples);
  EXPECT_THROW(retrieval_report(MatrixXd::Identity(3, 4), RetrievalProtocol::all()), DimError);
}

TEST(Retrieval, ProtocolNamesRoundTrip) {
  for (const char* n : {"all", "all_threshold", "dissimilar_subset", "small_batches"})
    EXPECT_EQ(RetrievalProtocol::parse(n).name(), n);
  EXPECT_THROW(RetrievalProtocol::parse("top"), ConfigError);
}

// Independent oracle: Tr sqrt(S1 S2) from the eigenvalues of the
// (non-symmetric) product, which are real and nonnegative for PSD inputs.
double fid_oracle(const VectorXd& m1, const MatrixXd& c1, const VectorXd& m2, const MatrixXd& c2) {
  const Eigen::EigenSolver<MatrixXd> eig(c1 * c2);
  double cross = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) cross += std::sqrt(std::max(0.0, eig.eigenvalues()(i).real()));
  return (m1 - m2).squaredNorm() + c1.trace() + c2.trace() - 2.0 * cross;
}

TEST(Fid, OneDimensionalAndIdentical) {
  const MatrixXd c = MatrixXd::Constant(1, 1, 4.0);
  EXPECT_NEAR(fid(VectorXd::Constant(1, 1.0), c, VectorXd::Zero(1), c), 1.0, 1e-12);
  const MatrixXd c2 = MatrixXd::Constant(1, 1, 9.0);
  EXPECT_NEAR(fid(VectorXd::Zero(1), c, VectorXd::Zero(1), c2), 1.0, 1e-12);  // (2 - 3)^2
}

TEST(Fid, MatchesDirectOracleOnRandomGaussians) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureMoments a = feature_moments(random_matrix(50, 5, rng));
    const FeatureMoments b = feature_moments(random_matrix(50, 5, rng, 1.5).array() + 0.3);
    const double expected = fid_oracle(a.mean, a.cov, b.mean, b.cov);
    EXPECT_NEAR(fid(a, b), expected, 1e-6 * expected);
    EXPECT_NEAR(fid(a, b), fid(b, a), 1e-8);
    EXPECT_LE(fid(a, a), 1e-8);
  }
}

TEST(Fid, RejectsAsymmetricOrIndefiniteCovariance) {
  MatrixXd asym = MatrixXd::Identity(2, 2);
  asym(0, 1) = 0.5;
  const VectorXd z = VectorXd::Zero(2);
  EXPECT_THROW(fid(z, asym, z, MatrixXd::Identity(2, 2)), InvalidCovariance);
  MatrixXd neg = MatrixXd::Identity(2, 2);
  neg(1, 1) = -0.5;
  EXPECT_THROW(fid(z, neg, z, MatrixXd::Identity(2, 2)), InvalidCovariance);
  EXPECT_THROW(feature_moments(MatrixXd::Zero(1, 3)), InsufficientSamples);
}

TEST(RPrecision, IdenticalFeaturesArePerfect) {
  Rng rng(7);
  const MatrixXd f = random_matrix(64, 8, rng);
  const RPrecision r = r_precision(f, f, 32, 1);
  EXPECT_DOUBLE_EQ(r.top1, 1.0);
  EXPECT_DOUBLE_EQ(r.top3, 1.0);
  EXPECT_THROW(r_precision(f.topRows(10), f.topRows(10)), InsufficientSamples);
}

TEST(RPrecision, IndependentFeaturesGiveChance) {
  Rng rng(8);
  const RPrecision r = r_precision(random_matrix(32000, 4, rng), random_matrix(32000, 4, rng), 32, 3);
  EXPECT_NEAR(r.top1, 1.0 / 32.0, 0.01);
  EXPECT_LE(r.top1, r.top2);
  EXPECT_LE(r.top2, r.top3);
}

TEST(RPrecision, InvariantUnderCommonRotation) {
  Rng rng(9);
  const MatrixXd t = random_matrix(64, 3, rng), m = t + 0.8 * random_matrix(64, 3, rng);
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  const RPrecision a = r_precision(t, m, 32, 2), b = r_precision(t * rot, m * rot, 32, 2);
  EXPECT_DOUBLE_EQ(a.top1, b.top1);
  EXPECT_DOUBLE_EQ(a.top3, b.top3);
}

TEST(GenerationMetrics, DegenerateCases) {
  const MatrixXd same = MatrixXd::Constant(10, 3, 0.4);
  EXPECT_EQ(mm_dist(same, same), 0.0);
  EXPECT_EQ(diversity(same, 5, 1), 0.0);
  EXPECT_EQ(mmodality({same.topRows(4), same.bottomRows(3)}), 0.0);
  EXPECT_THROW(diversity(same, 6), InsufficientSamples);
  EXPECT_THROW(mmodality({same.topRows(1)}), InsufficientSamples);
}

TEST(GenerationMetrics, DiversityMatchesEnumeratedPairs) {
  MatrixXd f(4, 2);
  f << 0, 0, 3, 4, 1, 0, 1, 1;
  std::vector<Eigen::Index> order = {0, 1, 2, 3};
  Rng rng(17);
  rng.shuffle(order);
  const double expected =
      0.5 * ((f.row(order[0]) - f.row(order[1])).norm() + (f.row(order[2]) - f.row(order[3])).norm());
  EXPECT_DOUBLE_EQ(diversity(f, 2, 17), expected);
}

TEST(GenerationMetrics, MmodalityHandValue) {
  MatrixXd g(3, 1);
  g << 0, 1, 3;  // pairwise 1, 3, 2 -> mean 2
  MatrixXd h(2, 1);
  h << 0, 4;
  EXPECT_DOUBLE_EQ(mmodality({g, h}), 3.0);
}

TEST(ControlMetrics, HandExample) {
  TrajectoryConstraint c = TrajectoryConstraint::empty(3);
  c.set(0, 0, Vec3(0, 0, 0));
  c.set(2, 5, Vec3(1, 1, 1));
  MatrixXd pred = c.targets;
  pred(0, 0) += 0.6;
  pred(2, 3 * 5 + 1) -= 0.2;
  const ControlReport r = control_metrics(std::vector<MatrixXd>{pred}, {c});
  EXPECT_DOUBLE_EQ(r.traj_err_50cm, 1.0);
  EXPECT_DOUBLE_EQ(r.loc_err_50cm, 0.5);
  EXPECT_NEAR(r.avg_err, 0.4, 1e-12);
  const ControlReport loose = control_metrics(std::vector<MatrixXd>{pred}, {c}, 1e9);
  EXPECT_EQ(loose.traj_err_50cm, 0.0);
  EXPECT_EQ(loose.loc_err_50cm, 0.0);
  const ControlReport exact = control_metrics(std::vector<MatrixXd>{c.targets}, {c});
  EXPECT_EQ(exact.avg_err, 0.0);
  EXPECT_EQ(exact.traj_err_50cm, 0.0);
  EXPECT_THROW(control_metrics(std::vector<MatrixXd>{pred}, {TrajectoryConstraint::empty(3)}), EmptyMask);
}

TEST(ControlMetrics, InvariantUnderConsistentFramePermutation) {
  Rng rng(10);
  TrajectoryConstraint c = TrajectoryConstraint::empty(5);
  for (int k = 0; k < 6; ++k) c.set(static_cast<int>(rng.index(5)), static_cast<int>(rng.index(22)), Vec3(rng.normal(), rng.normal(), rng.normal()));
  const MatrixXd pred = c.targets + 0.4 * random_matrix(5, 66, rng);
  TrajectoryConstraint cp = TrajectoryConstraint::empty(5);
  MatrixXd pp(5, 66);
  const int perm[] = {3, 0, 4, 1, 2};
  for (int t = 0; t < 5; ++t) {
    cp.mask.row(t) = c.mask.row(perm[t]);
    cp.targets.row(t) = c.targets.row(perm[t]);
    pp.row(t) = pred.row(perm[t]);
  }
  const auto a = control_metrics(std::vector<MatrixXd>{pred}, {c});
  const auto b = control_metrics(std::vector<MatrixXd>{pp}, {cp});
  EXPECT_DOUBLE_EQ(a.loc_err_50cm, b.loc_err_50cm);
  EXPECT_NEAR(a.avg_err, b.avg_err, 1e-15);
}

TEST(Cosine, OrthogonalAndParallel) {
  EXPECT_DOUBLE_EQ(cosine(VectorXd::Unit(3, 0), VectorXd::Unit(3, 1)), 0.0);
  EXPECT_DOUBLE_EQ(cosine(VectorXd::Constant(3, 2.0), VectorXd::Constant(3, 5.0)), 1.0);
  EXPECT_THROW(cosine(VectorXd::Zero(3), VectorXd::Ones(3)), ZeroNormEmbedding);
}

TEST(Htma, UntrainedAlignmentIsNotFitted) {
  EXPECT_THROW(htma_s(MotionSequence{}, "walk", AlignmentModel{}), NotFitted);
}

TEST(Htma, OwnCaptionScoresAboveAnother) {
  ToyCorpusSpec spec;
  spec.n_pairs = 10;
  const ToyCorpus toy = make_toy_corpus(spec, 4);
  AlignConfig config;
  config.epochs = 30;
  const AlignmentModel model = train_alignment(toy.corpus, config, 1).model;
  for (std::size_t i = 0; i < toy.corpus.size(); ++i) {
    const auto& other = toy.corpus[(i + 1) % toy.corpus.size()];
    const double own = htma_s(toy.corpus[i].motion, toy.corpus[i].annotation.global_texts[0], model);
    EXPECT_GT(own, htma_s(toy.corpus[i].motion, other.annotation.global_texts[0], model)) << toy.corpus[i].name;
    EXPECT_LE(own, 1.0 + 1e-12);
  }
}

TEST(Report, FlatSortedJson) {
  MetricReport r;
  r.add(ControlReport{0.0, 0.25, 0.1});
  r.add(retrieval_report(MatrixXd::Identity(3, 3), RetrievalProtocol::all()));
  r.set("feature_extractor", std::string("alignment"));
  EXPECT_DOUBLE_EQ(r.number("loc_err_50cm"), 0.25);
  EXPECT_DOUBLE_EQ(r.number("text_to_motion.recall_at.1"), 100.0);
  const std::string text = r.dump();
  EXPECT_NE(text.find("\"avg_err\": 0.1"), std::string::npos);
  EXPECT_LT(text.find("avg_err"), text.find("loc_err_50cm"));
  EXPECT_EQ(text, r.dump());
  EXPECT_THROW(r.number("fid"), ConfigError);
}

}  // namespace
}  // namespace kinmo
