#include "kinmo/generator.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>

#include "pipeline.hpp"

namespace kinmo {
namespace {

using nn::Matrix;
using testing::Pipeline;

TEST(MaskSchedule, CosineValuesAndRange) {
  EXPECT_DOUBLE_EQ(mask_schedule(0.0), 1.0);
  EXPECT_NEAR(mask_schedule(0.5), std::numbers::sqrt2 / 2.0, 1e-12);
  EXPECT_EQ(mask_schedule(1.0), 0.0);
  EXPECT_THROW(mask_schedule(-0.1), DimError);
  EXPECT_THROW(mask_schedule(1.5), DimError);
}

TEST(Guidance, ScaleZeroIsUnconditionalAndOneIsConditional) {
  Rng rng(1);
  Matrix c(4, 6), u(4, 6);
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    c(i) = rng.normal();
    u(i) = rng.normal();
  }
  EXPECT_EQ(guided_logits(c, u, 0.0), u);
  EXPECT_TRUE(guided_logits(c, u, 1.0).isApprox(c, 1e-15));
  EXPECT_TRUE(guided_logits(c, u, 3.0).isApprox(u + 3.0 * (c - u), 1e-15));
  EXPECT_THROW(guided_logits(c, Matrix::Zero(3, 6), 1.0), DimError);
}

TEST(ChoosePositions, SortedDistinctAndSized) {
  Rng rng(2);
  for (int count = 0; count <= 10; ++count) {
    const auto p = choose_positions(10, count, rng);
    ASSERT_EQ(static_cast<int>(p.size()), count);
    for (std::size_t i = 1; i < p.size(); ++i) EXPECT_LT(p[i - 1], p[i]);
    for (int v : p) {
      EXPECT_GE(v, 0);
      EXPECT_LT(v, 10);
    }
  }
}

TEST(FrameMask, RangesMapToTokenPositions) {
  const auto m = parse_frame_mask("0:4,9:10", 20, 4);
  const std::vector<bool> expected = {true, false, true, false, false};
  EXPECT_EQ(m, expected);
  EXPECT_EQ(parse_frame_mask("3:5", 20, 4), (std::vector<bool>{true, true, false, false, false}));
  EXPECT_THROW(parse_frame_mask("5:3", 20, 4), FormatError);
  EXPECT_THROW(parse_frame_mask("0:21", 20, 4), FormatError);
  EXPECT_THROW(parse_frame_mask("abc", 20, 4), FormatError);
  EXPECT_THROW(parse_frame_mask("", 20, 4), FormatError);
}

TEST(GenConfigTest, RoundTripAndValidation) {
  GenConfig c;
  c.guidance = 2.5;
  c.stage2_iterations = 7;
  const GenConfig back = GenConfig::from(c.to_config());
  EXPECT_DOUBLE_EQ(back.guidance, 2.5);
  EXPECT_EQ(back.stage2_iterations, 7);
  Config bad;
  bad.set("gen.remask_ratio", 1.5);
  EXPECT_THROW(GenConfig::from(bad), ConfigError);
  EXPECT_TRUE(GenConfig::keys().contains("gen.cond_dropout"));
}

class TrainedGenerator : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { pipeline_ = new Pipeline(Pipeline::train()); }
  static void TearDownTestSuite() { delete pipeline_; }
  static const Pipeline& p() { return *pipeline_; }
  static Pipeline* pipeline_;
};
Pipeline* TrainedGenerator::pipeline_ = nullptr;

TEST_F(TrainedGenerator, FinerConditionsExtendCoarserOnes) {
  const auto& a = p().toy.corpus[0].annotation;
  const ConditionTokens g = condition_tokens(a, Level::Global, p().alignment);
  const ConditionTokens j = condition_tokens(a, Level::Joint, p().alignment);
  const ConditionTokens i = condition_tokens(a, Level::Interaction, p().alignment);
  ASSERT_LT(g.rows.rows(), j.rows.rows());
  ASSERT_LT(j.rows.rows(), i.rows.rows());
  EXPECT_EQ(j.rows.topRows(g.rows.rows()), g.rows);
  EXPECT_EQ(i.rows.topRows(j.rows.rows()), j.rows);
  EXPECT_EQ(std::vector<int>(j.kinds.begin(), j.kinds.begin() + static_cast<long>(g.kinds.size())), g.kinds);
  EXPECT_EQ(g.global_rows, static_cast<int>(g.kinds.size()));
  EXPECT_EQ(i.global_rows, g.global_rows);
}

TEST_F(TrainedGenerator, OverfitsBaseTokens) {
  for (Level l : kAllLevels)
    EXPECT_GT(masked_token_accuracy(p().data, p().generator, p().alignment, l, 0.5, 9), 0.95) << to_string(l);
}

TEST_F(TrainedGenerator, TrainingIsSeedDeterministic) {
  GenConfig c;
  c.dim = 16;
  c.depth = 1;
  c.ff_dim = 16;
  c.epochs = 3;
  const auto a = train_generator(p().data, p().alignment, 64, c, 7);
  const auto b = train_generator(p().data, p().alignment, 64, c, 7);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t e = 0; e < a.log.size(); ++e) EXPECT_EQ(a.log[e].loss, b.log[e].loss);
}

TEST_F(TrainedGenerator, FullConditionDropoutIgnoresCaptions) {
  GenConfig c;
  c.dim = 16;
  c.depth = 1;
  c.ff_dim = 16;
  c.epochs = 3;
  c.cond_dropout = 1.0;
  std::vector<TokenizedEntry> shuffled = p().data;
  const std::size_t n = shuffled.size();
  for (std::size_t i = 0; i < n; ++i) {
    shuffled[i].annotation = p().data[(i + 1) % n].annotation;
    ASSERT_EQ(shuffled[i].annotation.global_texts.size(), p().data[i].annotation.global_texts.size());
  }
  const auto a = train_generator(p().data, p().alignment, 64, c, 5);
  const auto b = train_generator(shuffled, p().alignment, 64, c, 5);
  for (std::size_t e = 0; e < a.log.size(); ++e) EXPECT_EQ(a.log[e].loss, b.log[e].loss);
}

TEST_F(TrainedGenerator, GenerateIsDeterministicPerSeed) {
  TemplateReasoner reasoner;
  GenerationOptions o;
  o.seed = 11;
  const auto a = generate("a person walks forward", reasoner, p().models(), 40, o);
  const auto b = generate("a person walks forward", reasoner, p().models(), 40, o);
  EXPECT_EQ(a.grid, b.grid);
  EXPECT_EQ(a.motion.features(), b.motion.features());
  EXPECT_EQ(a.motion.frames(), 40);
  EXPECT_EQ(a.grid.length(), 10);
  EXPECT_FALSE(a.metadata.reasoner_fallback);
  EXPECT_EQ(a.metadata.level_used, Level::Interaction);
  EXPECT_THROW(generate("x", reasoner, p().models(), 0, o), InvalidMotion);
}

TEST_F(TrainedGenerator, ZeroRemaskRatioKeepsStageOneTokens) {
  TemplateReasoner reasoner;
  GenerationOptions full, coarse;
  full.seed = coarse.seed = 4;
  full.remask_ratio = 0.0;
  coarse.max_level = Level::Global;
  const auto a = generate("a person jumps", reasoner, p().models(), 36, full);
  const auto b = generate("a person jumps", reasoner, p().models(), 36, coarse);
  EXPECT_EQ(a.grid.tokens.col(0), b.grid.tokens.col(0));
}

TEST_F(TrainedGenerator, ReasonerFailureFallsBackToGlobal) {
  testing::FailingReasoner reasoner;
  const auto r = generate("a person waves", reasoner, p().models(), 24, GenerationOptions{});
  EXPECT_TRUE(r.metadata.reasoner_fallback);
  EXPECT_EQ(r.metadata.level_used, Level::Global);
  EXPECT_NE(r.metadata.reasoner_error.find("offline"), std::string::npos);
  EXPECT_EQ(r.motion.frames(), 24);
}

TEST_F(TrainedGenerator, EditPreservesUnmaskedTokensExactly) {
  Rng rng(21);
  const auto& entry = p().data[2];
  const int steps = entry.grid.length();
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<bool> mask(static_cast<std::size_t>(steps));
    for (auto&& m : mask) m = rng.uniform() < 0.4;
    GenerationOptions o;
    o.seed = static_cast<std::uint64_t>(trial);
    const MotionTokenGrid out = edit_infill(entry.grid, mask, entry.annotation, p().models(), o);
    ASSERT_EQ(out.tokens.rows(), entry.grid.tokens.rows());
    for (int t = 0; t < steps; ++t)
      if (!mask[static_cast<std::size_t>(t)]) ASSERT_EQ(out.tokens.row(t), entry.grid.tokens.row(t)) << trial;
  }
}

TEST_F(TrainedGenerator, EditWithEmptyMaskIsIdentityAndFullMaskIsGenerate) {
  const auto& entry = p().data[0];
  const std::vector<bool> none(static_cast<std::size_t>(entry.grid.length()), false);
  EXPECT_EQ(edit_infill(entry.grid, none, entry.annotation, p().models(), GenerationOptions{}), entry.grid);

  TemplateReasoner reasoner;
  GenerationOptions o;
  o.seed = 8;
  const auto g = generate("a person turns left", reasoner, p().models(), entry.grid.frames, o);
  const std::vector<bool> all(static_cast<std::size_t>(entry.grid.length()), true);
  MotionTokenGrid zero = entry.grid;
  zero.tokens.setZero();
  EXPECT_EQ(edit_infill(zero, all, g.metadata.annotation, p().models(), o), g.grid);
  EXPECT_EQ(edit_infill(entry.grid, all, g.metadata.annotation, p().models(), o), g.grid);

  EXPECT_THROW(edit_infill(entry.grid, std::vector<bool>(3, true), entry.annotation, p().models(), o), DimError);
}

TEST_F(TrainedGenerator, CheckpointRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "kinmo_generator_test.ckpt";
  save_checkpoint(path, p().generator.to_checkpoint());
  const GeneratorModel loaded = GeneratorModel::from_checkpoint(load_checkpoint(path, kGeneratorComponent));
  std::filesystem::remove(path);
  GeneratorModel a = p().generator, b = loaded;
  EXPECT_EQ(nn::parameter_checksum(a), nn::parameter_checksum(b));
  const auto& e = p().data[1];
  const ConditionTokens c = condition_tokens(e.annotation, Level::Joint, p().alignment);
  std::vector<int> ids(e.grid.tokens.col(0).data(), e.grid.tokens.col(0).data() + e.grid.length());
  nn::NoGradGuard guard;
  EXPECT_EQ(p().generator.base().logits(ids, c).value(), loaded.base().logits(ids, c).value());
}

}  // namespace
}  // namespace kinmo
