#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "kinmo/alignment.hpp"
#include "kinmo/error.hpp"
#include "kinmo/toy.hpp"

namespace kinmo {
namespace {

using nn::constant;
using nn::Matrix;
using nn::Var;
using testing::gradcheck;
using testing::random_matrix;

Matrix rows2(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

double value(const Var& v) { return v.value()(0, 0); }

TEST(CrossAttention, SingleCoarseRowIsCopied) {
  Rng rng(1);
  const Matrix coarse = random_matrix(1, 4, rng);
  const Matrix out = cross_attention_fuse(constant(random_matrix(5, 4, rng)), constant(coarse), 4).value();
  for (Eigen::Index r = 0; r < 5; ++r) EXPECT_TRUE(out.row(r).isApprox(coarse.row(0), 1e-14));
}

TEST(CrossAttention, HandComputedWeights) {
  // logits (0, ln 3) / sqrt(2)
  const double ln3 = std::log(3.0);
  const Matrix low = rows2({{1.0, 0.0}});
  const Matrix coarse = rows2({{0.0, 1.0}, {ln3, 0.0}});
  const double e = std::exp(ln3 / std::sqrt(2.0));
  const double w1 = 1.0 / (1.0 + e), w2 = e / (1.0 + e);
  const Matrix out = cross_attention_fuse(constant(low), constant(coarse), 2).value();
  EXPECT_NEAR(out(0, 0), w2 * ln3, 1e-14);
  EXPECT_NEAR(out(0, 1), w1, 1e-14);
}

TEST(CrossAttention, IdenticalCoarseRowsAndConvexHull) {
  Rng rng(2);
  Matrix same(3, 4);
  for (int r = 0; r < 3; ++r) same.row(r) << 0.5, -1.0, 2.0, 0.25;
  const Matrix out = cross_attention_fuse(constant(random_matrix(6, 4, rng)), constant(same), 4).value();
  for (Eigen::Index r = 0; r < 6; ++r) EXPECT_TRUE(out.row(r).isApprox(same.row(0), 1e-14));

  const Matrix coarse = random_matrix(5, 4, rng);
  const Matrix hull = cross_attention_fuse(constant(3.0 * random_matrix(7, 4, rng)), constant(coarse), 4).value();
  for (Eigen::Index c = 0; c < 4; ++c) {
    EXPECT_GE(hull.col(c).minCoeff(), coarse.col(c).minCoeff() - 1e-12);
    EXPECT_LE(hull.col(c).maxCoeff(), coarse.col(c).maxCoeff() + 1e-12);
  }
}

TEST(CrossAttention, EmptyContextRejected) {
  EXPECT_THROW(cross_attention_fuse(constant(Matrix::Ones(2, 3)), constant(Matrix(0, 3)), 3), EmptyContext);
}

TEST(CrossAttention, GradientCheck) {
  Rng rng(3);
  const double err = gradcheck([](const std::vector<Var>& in) {
    return nn::sum_all(nn::square(cross_attention_fuse(in[0], in[1], 4)));
  }, {random_matrix(3, 4, rng), random_matrix(2, 4, rng)});
  EXPECT_LT(err, 1e-4);
}

Gaussian gaussian(const Matrix& mean, const Matrix& sigma) { return {constant(mean), constant(sigma)}; }

TEST(ProgressiveFuse, ZeroFineMeansCollapseToCoarse) {
  const Matrix mu = rows2({{0.3, -0.2}});
  const Matrix zero = Matrix::Zero(1, 2), one = Matrix::Ones(1, 2);
  const LatentTriple z = progressive_fuse(gaussian(mu, one), gaussian(zero, one), gaussian(zero, one));
  EXPECT_EQ(z.global.value(), mu);
  EXPECT_EQ(z.joint.value(), mu);
  EXPECT_EQ(z.inter.value(), mu);
}

TEST(ProgressiveFuse, VectorAdditionAndSigmaFolding) {
  const Matrix one = Matrix::Ones(1, 2);
  const Gaussian c = gaussian(rows2({{1, 0}}), one), j = gaussian(rows2({{0, 1}}), one),
                 i = gaussian(rows2({{1, 1}}), 2.0 * one);
  EXPECT_EQ(progressive_fuse(c, j, i).inter.value(), rows2({{2, 2}}));
  // gamma = 0.5 adds 0.5*sigma_j and 0.5*sigma_i
  const LatentTriple z = progressive_fuse(c, j, i, nn::scalar(0.5));
  EXPECT_EQ(z.joint.value(), rows2({{1.5, 1.5}}));
  EXPECT_EQ(z.inter.value(), rows2({{3.5, 3.5}}));
}

TEST(ProgressiveFuse, DimensionMismatch) {
  const Matrix one = Matrix::Ones(1, 2);
  EXPECT_THROW(progressive_fuse(gaussian(one, one), gaussian(Matrix::Ones(1, 3), Matrix::Ones(1, 3)),
                                gaussian(one, one)),
               DimError);
}

TEST(Similarity, OrthonormalAndScaleInvariant) {
  const Matrix eye = Matrix::Identity(3, 3);
  EXPECT_TRUE(similarity_matrix(eye, eye).isApprox(eye, 1e-15));
  Rng rng(4);
  const Matrix a = random_matrix(4, 5, rng), b = random_matrix(4, 5, rng);
  Matrix scaled = a;
  scaled.row(2) *= 7.5;
  EXPECT_TRUE(similarity_matrix(scaled, b).isApprox(similarity_matrix(a, b), 1e-14));
  EXPECT_LE(similarity_matrix(a, b).cwiseAbs().maxCoeff(), 1.0 + 1e-15);
}

TEST(Similarity, HandVectors) {
  const double h = 1.0 / std::sqrt(2.0);
  const Matrix s = similarity_matrix(rows2({{1, 0}, {h, h}}), rows2({{0, 1}, {1, 0}}));
  EXPECT_TRUE(s.isApprox(rows2({{0, 1}, {h, h}}), 1e-15));
  EXPECT_THROW(similarity_matrix(rows2({{0, 0}, {1, 0}}), rows2({{0, 1}, {1, 0}})), ZeroNormEmbedding);
}

TEST(InfoNCE, UniformSimilarityGivesLogN) {
  for (int n : {2, 8, 64})
    for (double tau : {0.07, 0.1, 1.0})
      EXPECT_NEAR(value(infonce(constant(Matrix::Constant(n, n, 0.3)), tau)), std::log(n), 1e-9);
}

TEST(InfoNCE, TwoByTwoIdentity) {
  // -ln(e / (e + 1))
  EXPECT_NEAR(value(infonce(constant(Matrix::Identity(2, 2)), 1.0)), 0.31326, 1e-5);
  EXPECT_NEAR(value(infonce(constant(Matrix::Identity(2, 2)), 1.0)), std::log1p(std::exp(-1.0)), 1e-15);
}

TEST(InfoNCE, DecreasesAsDiagonalGrows) {
  double prev = 1e9;
  for (double d : {2.0, 5.0, 10.0}) {
    const double l = value(infonce(constant(d * Matrix::Identity(4, 4)), 1.0));
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(InfoNCE, SymmetricPermutationInvariance) {
  Rng rng(5);
  const Matrix s = random_matrix(5, 5, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(5);
  p.indices() << 3, 0, 4, 1, 2;
  const Matrix permuted = p * s * p.transpose();
  EXPECT_NEAR(value(infonce(constant(s), 0.1)), value(infonce(constant(permuted), 0.1)), 1e-12);
}

TEST(InfoNCE, FilteredNegativesLeaveTheDenominator) {
  Rng rng(6);
  const Matrix s = random_matrix(3, 3, rng);
  NegativeMask all = NegativeMask::Constant(3, 3, true);
  // With every negative removed each softmax is over the diagonal alone.
  EXPECT_NEAR(value(infonce(constant(s), 0.1, &all)), 0.0, 1e-12);
  NegativeMask none = NegativeMask::Constant(3, 3, false);
  EXPECT_EQ(value(infonce(constant(s), 0.1, &none)), value(infonce(constant(s), 0.1)));
  // Masking (0,1) and (1,0) equals the 2x2 problem on the remaining entries for row/col 0.
  NegativeMask one = NegativeMask::Constant(3, 3, false);
  one(0, 1) = one(1, 0) = true;
  EXPECT_LT(value(infonce(constant(Matrix::Zero(3, 3)), 1.0, &one)), std::log(3.0));
}

TEST(InfoNCE, InvalidInputs) {
  EXPECT_THROW(infonce(constant(Matrix::Identity(2, 2)), 0.0), InvalidTemperature);
  EXPECT_THROW(infonce(constant(Matrix::Identity(2, 2)), -1.0), InvalidTemperature);
  EXPECT_THROW(infonce(constant(Matrix::Identity(1, 1)), 1.0), DimError);
}

TEST(InfoNCE, GradientCheck) {
  Rng rng(7);
  NegativeMask mask = NegativeMask::Constant(4, 4, false);
  mask(1, 2) = true;
  const NegativeMask* masks[] = {nullptr, &mask};
  for (const NegativeMask* m : masks) {
    const double err = gradcheck([m](const std::vector<Var>& in) { return infonce(in[0], 0.5, m); },
                                 {random_matrix(4, 4, rng)});
    EXPECT_LT(err, 1e-4);
  }
  const double err = gradcheck([](const std::vector<Var>& in) {
    return infonce(similarity_matrix(in[0], in[1]), 0.1);
  }, {random_matrix(3, 6, rng), random_matrix(3, 6, rng)});
  EXPECT_LT(err, 1e-4);
}

TEST(KL, ClosedFormValues) {
  const Matrix zero = Matrix::Zero(1, 1), one = Matrix::Ones(1, 1);
  EXPECT_NEAR(value(gaussian_kl(gaussian(one, one), gaussian(zero, one))), 0.5, 1e-15);
  const Matrix z3 = Matrix::Zero(2, 3), o3 = Matrix::Ones(2, 3);
  EXPECT_NEAR(value(kl_regularizers(gaussian(z3, o3), gaussian(z3, o3))), 0.0, 1e-15);
  // text N(1,1), motion N(0,1): 0.5 + 0.5 + 0.5 + 0
  EXPECT_NEAR(value(kl_regularizers(gaussian(one, one), gaussian(zero, one))), 1.5, 1e-15);
}

TEST(KL, NonnegativeAndGradientCheck) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Gaussian t = gaussian(random_matrix(3, 4, rng), random_matrix(3, 4, rng).array().exp().matrix());
    const Gaussian m = gaussian(random_matrix(3, 4, rng), random_matrix(3, 4, rng).array().exp().matrix());
    EXPECT_GE(value(kl_regularizers(t, m)), 0.0);
  }
  const double err = gradcheck([](const std::vector<Var>& in) {
    return kl_regularizers({in[0], nn::exp(in[1])}, {in[2], nn::exp(in[3])});
  }, {random_matrix(2, 3, rng), random_matrix(2, 3, rng), random_matrix(2, 3, rng), random_matrix(2, 3, rng)});
  EXPECT_LT(err, 1e-4);
}

TEST(Losses, SmoothL1Examples) {
  const Matrix a = rows2({{0.5}}), zero = Matrix::Zero(1, 1), two = rows2({{2.0}});
  EXPECT_DOUBLE_EQ(value(embedding_similarity_loss(constant(a), constant(zero))), 0.125);
  EXPECT_DOUBLE_EQ(value(reconstruction_loss(constant(two), constant(zero))), 1.5);
  Rng rng(9);
  const Matrix x = random_matrix(4, 3, rng);
  EXPECT_EQ(value(reconstruction_loss(constant(x), constant(x))), 0.0);
  EXPECT_THROW(reconstruction_loss(constant(x), constant(Matrix::Zero(4, 2))), DimError);
}

TEST(Levels, ParseAndReject) {
  EXPECT_EQ(parse_level("joint"), Level::Joint);
  EXPECT_THROW(parse_level("pose"), InvalidLevel);
}

ToyCorpus small_toy(int n) {
  ToyCorpusSpec spec;
  spec.n_pairs = n;
  spec.min_frames = 24;
  spec.max_frames = 32;
  return make_toy_corpus(spec, 3);
}

AlignConfig small_config(int epochs) {
  AlignConfig c;
  c.latent_dim = 16;
  c.ff_dim = 32;
  c.depth = 1;
  c.epochs = epochs;
  c.batch_size = 8;
  return c;
}

TEST(Training, SinglePairReconstructionImproves) {
  const ToyCorpus toy = small_toy(1);
  const auto result = train_alignment(toy.corpus, small_config(50), 11);
  auto recon = [](const EpochLog& l) {
    for (const auto& [k, v] : l.terms)
      if (k == "reconstruction") return v;
    return -1.0;
  };
  EXPECT_LT(recon(result.log.back()), recon(result.log.front()));
}

TEST(Training, FixedSeedIsBitReproducible) {
  const ToyCorpus toy = small_toy(6);
  const auto a = train_alignment(toy.corpus, small_config(3), 5);
  const auto b = train_alignment(toy.corpus, small_config(3), 5);
  ASSERT_EQ(a.log.size(), 3u);
  for (std::size_t e = 0; e < a.log.size(); ++e) EXPECT_EQ(a.log[e].loss, b.log[e].loss);
  EXPECT_EQ(embed_motion(toy.corpus[0].motion, a.model), embed_motion(toy.corpus[0].motion, b.model));
}

TEST(Training, NonFiniteLossRaisesDiverged) {
  const ToyCorpus toy = small_toy(4);
  AlignConfig c = small_config(2);
  c.weights.kl = 1e308;
  try {
    train_alignment(toy.corpus, c, 1);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.epoch(), 0);
  }
}

TEST(Embedding, GlobalLevelIgnoresFinerTexts) {
  const ToyCorpus toy = small_toy(2);
  Rng rng(1);
  const AlignmentModel model(small_config(0), FeatureNormalizer::fit(toy.corpus), rng);
  HierarchicalAnnotation a = toy.corpus[0].annotation;
  const Eigen::VectorXd g = embed_text(a, Level::Global, model);
  const Eigen::VectorXd j = embed_text(a, Level::Joint, model);
  EXPECT_EQ(g, embed_text(a, Level::Global, model));
  a.joint(KinematicGroup::LeftArm) = "spins wildly";
  a.interaction(all_group_pairs()[3]) = "collide";
  EXPECT_EQ(g, embed_text(a, Level::Global, model));
  EXPECT_NE(j, embed_text(a, Level::Joint, model));
}

TEST(Embedding, CheckpointRoundTripPreservesEmbeddings) {
  const ToyCorpus toy = small_toy(4);
  const auto trained = train_alignment(toy.corpus, small_config(2), 3);
  const auto path = std::filesystem::temp_directory_path() / "kinmo_align_test.ckpt";
  save_checkpoint(path, trained.model.to_checkpoint());
  const AlignmentModel loaded =
      AlignmentModel::from_checkpoint(load_checkpoint(path, kAlignmentComponent, small_config(2).to_config()));
  for (const auto& e : toy.corpus) {
    EXPECT_EQ(embed_motion(e.motion, loaded), embed_motion(e.motion, trained.model));
    EXPECT_EQ(embed_text(e.annotation, Level::Interaction, loaded),
              embed_text(e.annotation, Level::Interaction, trained.model));
  }
  EXPECT_THROW(load_checkpoint(path, kAlignmentComponent, small_config(3).to_config()), CheckpointError);
  EXPECT_THROW(load_checkpoint(path, "rqvae"), CheckpointError);
  std::filesystem::remove(path);
}

TEST(Embedding, MatchedPairsBeatMismatchedAfterTraining) {
  const ToyCorpus toy = small_toy(10);
  AlignConfig c = small_config(40);
  const auto result = train_alignment(toy.corpus, c, 2);
  int wins = 0;
  for (int i = 0; i < 10; ++i) {
    const int j = (i + 3) % 10;
    const Eigen::VectorXd m = embed_motion(toy.corpus[i].motion, result.model).normalized();
    const double matched = m.dot(embed_text(toy.corpus[i].annotation, Level::Interaction, result.model).normalized());
    const double other = m.dot(embed_text(toy.corpus[j].annotation, Level::Interaction, result.model).normalized());
    wins += matched > other;
  }
  EXPECT_EQ(wins, 10);
}

}  // namespace
}  // namespace kinmo
