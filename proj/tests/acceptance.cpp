// Acceptance checks 1-10; prints one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "kinmo/annotator.hpp"
#include "kinmo/eval.hpp"
#include "kinmo/reasoner.hpp"
#include "kinmo/representation.hpp"
#include "pipeline.hpp"

#ifndef KINMO_CLI
#error "KINMO_CLI must point at the kinmo binary"
#endif

namespace fs = std::filesystem;
using namespace kinmo;
using Eigen::MatrixXd;
using nn::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome representation_round_trip() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(100);
  double worst = 0.0;
  bool antisymmetric = true;
  const auto& skel = JointSkeleton::smpl22();
  const auto& conn = GroupConnectivity::standard();
  for (int i = 0; i < 100; ++i) {
    const MotionSequence m = testing::random_fk_motion(40, rng);
    const Decomposition d = decompose(m, skel, conn);
    const MotionSequence r = recompose(d.groups, RootState::from_motion(m), skel);
    worst = std::max(worst, (r.features() - m.features()).cwiseAbs().maxCoeff());
    for (const auto& p : all_group_pairs()) {
      const PairFeatures f = pair_features(d.groups.at(p.first), d.groups.at(p.second), m, conn);
      const PairFeatures b = pair_features(d.groups.at(p.second), d.groups.at(p.first), m, conn);
      antisymmetric = antisymmetric && f.delta_position == -b.delta_position;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && antisymmetric && secs < 10.0,
          fmt("max abs error %.3g, antisymmetry %s, %.2f s", worst, antisymmetric ? "exact" : "broken", secs)};
}

Outcome infonce_analytic() {
  double worst = 0.0;
  for (int n : {2, 8, 64})
    for (double tau : {0.07, 0.1, 1.0}) {
      const double l = infonce(nn::constant(MatrixXd::Constant(n, n, 0.3)), tau).item();
      worst = std::max(worst, std::abs(l - std::log(static_cast<double>(n))));
    }
  const double id = infonce(nn::constant(MatrixXd::Identity(2, 2)), 1.0).item();
  return {worst < 1e-9 && std::abs(id - 0.31326) < 1e-5,
          fmt("max |L - ln N| = %.3g, identity case %.6f", worst, id)};
}

Outcome gradient_checks() {
  Rng rng(3);
  using testing::gradcheck;
  using testing::random_matrix;
  const double nce = gradcheck([](std::vector<Var>& in) { return infonce(in[0], 0.5); }, {random_matrix(4, 4, rng)});
  const double fuse = gradcheck(
      [](std::vector<Var>& in) { return nn::sum_all(nn::square(cross_attention_fuse(in[0], in[1], 4))); },
      {random_matrix(3, 4, rng), random_matrix(2, 4, rng)});
  const double kl = gradcheck(
      [](std::vector<Var>& in) { return kl_regularizers({in[0], nn::exp(in[1])}, {in[2], nn::exp(in[3])}); },
      {random_matrix(2, 3, rng), random_matrix(2, 3, rng), random_matrix(2, 3, rng), random_matrix(2, 3, rng)});
  const MatrixXd target = random_matrix(3, 66, rng);
  JointMask mask = JointMask::Constant(3, kNumJoints, false);
  mask(0, 0) = mask(1, 5) = mask(2, 21) = true;
  const double ctl = gradcheck([&](std::vector<Var>& in) { return control_loss(in[0], target, mask); },
                               {random_matrix(3, 66, rng)});
  const double worst = std::max({nce, fuse, kl, ctl});
  return {worst < 1e-4, fmt("infonce %.2g, cross_attention_fuse %.2g, kl_regularizers %.2g, control_loss %.2g", nce,
                            fuse, kl, ctl)};
}

Outcome alignment_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  ToyCorpusSpec spec;
  spec.n_pairs = 64;
  const ToyCorpus toy = make_toy_corpus(spec, 7);
  const AlignmentModel model = train_alignment(toy.corpus, AlignConfig{}, 1).model;
  MatrixXd t(64, model.config().latent_dim), m(64, model.config().latent_dim);
  for (int i = 0; i < 64; ++i) {
    t.row(i) = embed_text(toy.corpus[static_cast<std::size_t>(i)].annotation, Level::Interaction, model).transpose();
    m.row(i) = embed_motion(toy.corpus[static_cast<std::size_t>(i)].motion, model).transpose();
  }
  const RetrievalResult r = retrieval_report(similarity_matrix(t, m), RetrievalProtocol::all());
  const double secs = seconds_since(t0);
  const double r1t = r.text_to_motion.recall_at.at(1) / 100.0, r1m = r.motion_to_text.recall_at.at(1) / 100.0;
  return {r1t >= 0.9 && r1m >= 0.9 && r.text_to_motion.med_rank == 1.0 && r.motion_to_text.med_rank == 1.0 &&
              secs < 1200.0,
          fmt("R@1 t2m %.3f m2t %.3f, MedR %.1f/%.1f, %.0f s", r1t, r1m, r.text_to_motion.med_rank,
              r.motion_to_text.med_rank, secs)};
}

Outcome rqvae_overfit(const testing::Pipeline& p) {
  double worst = 0.0;
  bool monotone = true;
  for (const auto& e : p.toy.corpus) {
    const MotionTokenGrid g = rqvae_encode(e.motion, p.rqvae);
    double previous = std::numeric_limits<double>::infinity();
    for (int l = 1; l <= g.layers(); ++l) {
      const double mse = (p.rqvae.decode(g, l).features() - e.motion.features()).array().square().mean();
      monotone = monotone && mse <= previous;
      previous = mse;
    }
    worst = std::max(worst, previous);
  }
  const bool shape = p.rqvae.config().layers == 3 && p.rqvae.config().codebook_size == 64 && p.toy.corpus.size() == 8;
  return {shape && worst < 0.01 && monotone,
          fmt("8 sequences, Q=3 K=64, worst MSE %.4g, layer errors %s", worst, monotone ? "non-increasing" : "increase")};
}

Outcome editing_exactness(const testing::Pipeline& p) {
  Rng rng(21);
  const TokenizedEntry& entry = p.data[3];
  const auto steps = static_cast<std::size_t>(entry.grid.length());
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<bool> mask(steps);
    for (auto&& b : mask) b = rng.uniform() < 0.5;
    GenerationOptions o;
    o.seed = static_cast<std::uint64_t>(trial);
    const MotionTokenGrid out = edit_infill(entry.grid, mask, entry.annotation, p.models(), o);
    for (std::size_t t = 0; t < steps; ++t)
      if (!mask[t] && out.tokens.row(static_cast<Eigen::Index>(t)) != entry.grid.tokens.row(static_cast<Eigen::Index>(t)))
        ++violations;
  }
  const bool identity =
      edit_infill(entry.grid, std::vector<bool>(steps, false), entry.annotation, p.models(), GenerationOptions{}) ==
      entry.grid;
  return {violations == 0 && identity,
          fmt("%d unmasked-token changes over 100 masks, all-false mask %s", violations, identity ? "is identity" : "changed tokens")};
}

Outcome control(const testing::Pipeline& p) {
  std::vector<ControlEntry> data;
  for (std::size_t i = 0; i < p.data.size(); ++i) data.push_back({p.data[i].grid, p.data[i].annotation, p.toy.constraints[i]});
  TemplateReasoner reasoner;

  Rng rng(9);
  const ControlModel fresh(ControlConfig{}, p.generator, p.rqvae.config().downsample, rng);
  bool identical = true;
  for (std::size_t i = 0; i < data.size(); ++i) {
    GenerationOptions o;
    o.seed = 40 + i;
    const std::string& text = data[i].annotation.global_texts[0];
    const auto plain = generate(text, reasoner, p.models(), data[i].grid.frames, o);
    const auto ctl = controlled_generate(text, data[i].constraint, 0, reasoner, p.models(), fresh, o);
    identical = identical && plain.grid == ctl.generation.grid && plain.motion.features() == ctl.generation.motion.features();
  }

  const ControlModel trained = train_control(data, p.alignment, p.rqvae, p.generator, ControlConfig{}, 4).model;
  std::vector<MotionSequence> motions;
  std::vector<TrajectoryConstraint> constraints;
  for (std::size_t i = 0; i < data.size(); ++i) {
    GenerationOptions o;
    o.seed = 5;
    const auto r = controlled_generate(data[i].annotation.global_texts[0], data[i].constraint, 0, reasoner, p.models(),
                                       trained, o);
    motions.push_back(r.generation.motion);
    constraints.push_back(data[i].constraint);
  }
  const ControlReport rep = control_metrics(motions, constraints, JointSkeleton::smpl22());

  bool empty_raises = false;
  try {
    control_loss(nn::constant(MatrixXd::Zero(2, 66)), MatrixXd::Zero(2, 66), JointMask::Constant(2, kNumJoints, false));
  } catch (const EmptyMask&) {
    empty_raises = true;
  }
  return {identical && rep.avg_err < 0.1 && rep.traj_err_50cm == 0.0 && empty_raises,
          fmt("(a) zero-init %s; (b) Avg err %.4f m, Traj err %.3f; (c) EmptyMask %s",
              identical ? "bit-identical" : "differs", rep.avg_err, rep.traj_err_50cm, empty_raises ? "raised" : "missing")};
}

Outcome metric_oracles() {
  Rng rng(8);
  double fid_rel = 0.0, fid_self = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const FeatureMoments a = feature_moments(testing::random_matrix(40, 5, rng));
    const FeatureMoments b = feature_moments((testing::random_matrix(40, 5, rng, 2.0).array() + 0.5).matrix());
    const Eigen::EigenSolver<MatrixXd> eig(a.cov * b.cov);
    double cross = 0.0;
    for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) cross += std::sqrt(std::max(0.0, eig.eigenvalues()(i).real()));
    const double direct = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    fid_rel = std::max(fid_rel, std::abs(fid(a, b) - direct) / direct);
    fid_self = std::max(fid_self, fid(a, a));
  }
  int rank_mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const MatrixXd s = testing::random_matrix(10, 10, rng);
    const std::vector<int> ranks = ground_truth_ranks(s);
    for (int i = 0; i < 10; ++i) {
      std::vector<std::pair<double, int>> row;
      for (int j = 0; j < 10; ++j) row.emplace_back(-s(i, j), j);
      std::sort(row.begin(), row.end());
      const int brute = static_cast<int>(std::find_if(row.begin(), row.end(), [i](auto& x) { return x.second == i; }) - row.begin()) + 1;
      rank_mismatches += brute != ranks[static_cast<std::size_t>(i)];
    }
  }
  const RPrecision rp = r_precision(testing::random_matrix(32000, 8, rng), testing::random_matrix(32000, 8, rng), 32, 1);
  return {fid_rel < 1e-6 && fid_self <= 1e-8 && rank_mismatches == 0 && std::abs(rp.top1 - 1.0 / 32.0) <= 0.01,
          fmt("FID rel err %.2g, fid(a,a) %.2g, rank mismatches %d, R-Precision top1 %.4f over 1000 batches", fid_rel,
              fid_self, rank_mismatches, rp.top1)};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "kinmo_acceptance_e2e";
  fs::remove_all(root);
  const std::string cli = KINMO_CLI;
  auto run_pipeline = [&](const fs::path& dir) {
    fs::create_directories(dir);
    const std::string d = dir.string();
    const std::string log = " >>" + d + "/log.txt 2>&1";
    const std::vector<std::string> steps = {
        cli + " make-toy-data --n 8 --seed 5 --out " + d + "/toy",
        cli + " train-align --corpus " + d + "/toy --out " + d + "/align.ckpt --seed 5 --epochs 4",
        cli + " train-rqvae --corpus " + d + "/toy --out " + d + "/rqvae.ckpt --seed 5 --epochs 20",
        cli + " train-gen --corpus " + d + "/toy --align " + d + "/align.ckpt --rqvae " + d + "/rqvae.ckpt --out " + d +
            "/gen.ckpt --seed 5 --epochs 10",
        cli + " generate --corpus " + d + "/toy --repeats 2 --align " + d + "/align.ckpt --rqvae " + d +
            "/rqvae.ckpt --gen " + d + "/gen.ckpt --out " + d + "/pred --seed 5",
        cli + " eval --suite generation --pred " + d + "/pred --ref " + d + "/toy --align " + d + "/align.ckpt --pool 8 --report " +
            d + "/report.json --seed 5",
    };
    for (const auto& s : steps)
      if (std::system((s + log).c_str()) != 0) return false;
    return true;
  };
  if (!run_pipeline(root / "a") || !run_pipeline(root / "b"))
    return {false, "a pipeline step failed; see " + (root / "a" / "log.txt").string()};
  int files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file() || e.path().filename() == "log.txt") continue;
    ++files;
    const fs::path other = root / "b" / fs::relative(e.path(), root / "a");
    if (!fs::exists(other) || read_file(e.path()) != read_file(other)) ++differ;
  }
  fs::remove_all(root);
  return {files > 0 && differ == 0, fmt("%d files compared (checkpoints, motions, report), %d differ", files, differ)};
}

Outcome keyframes() {
  auto unit = [](int j) {
    Eigen::RowVector2d v = Eigen::RowVector2d::Zero();
    v(j) = 1.0;
    return v;
  };
  MatrixXd a(5, 2);
  a << unit(0), unit(0), unit(0), unit(1), unit(0);
  const bool c1 = select_keyframes(a, 0.9).indices == std::vector<int>{0, 3, 4};
  const MatrixXd b = MatrixXd::Constant(6, 3, 1.0 / std::sqrt(3.0));
  const bool c2 = select_keyframes(b, 0.9).indices == std::vector<int>{0};
  // Slow drift: 20 degrees per frame, threshold cos 30 degrees -> every second frame.
  MatrixXd c(7, 2);
  for (int t = 0; t < 7; ++t) c.row(t) << std::cos(t * 20.0 * M_PI / 180.0), std::sin(t * 20.0 * M_PI / 180.0);
  const bool c3 = select_keyframes(c, std::cos(30.0 * M_PI / 180.0)).indices == std::vector<int>{0, 2, 4, 6};
  return {c1 && c2 && c3, fmt("{0,3,4} case %s, constant rows %s, 20-degree drift %s", c1 ? "ok" : "wrong",
                              c2 ? "ok" : "wrong", c3 ? "ok" : "wrong")};
}

Outcome guarded(const std::function<Outcome()>& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("threw ") + e.what()};
  }
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int n, const char* name, const Outcome& o) {
    std::printf("criterion %2d %-26s %s  %s\n", n, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  };
  report(1, "representation-round-trip", guarded(representation_round_trip));
  report(2, "infonce-analytic", guarded(infonce_analytic));
  report(3, "gradient-checks", guarded(gradient_checks));
  report(4, "alignment-overfit", guarded(alignment_overfit));
  std::optional<testing::Pipeline> pipeline;
  const Outcome trained = guarded([&] {
    pipeline.emplace(testing::Pipeline::train());
    return Outcome{true, ""};
  });
  auto with_pipeline = [&](auto f) { return pipeline ? guarded([&] { return f(*pipeline); }) : trained; };
  report(5, "rqvae-overfit", with_pipeline(rqvae_overfit));
  report(6, "editing-exactness", with_pipeline(editing_exactness));
  report(7, "control", with_pipeline(control));
  report(8, "metric-oracles", guarded(metric_oracles));
  report(9, "end-to-end-determinism", guarded(cli_determinism));
  report(10, "keyframe-selection", guarded(keyframes));
  std::printf("%d of 10 criteria passed\n", 10 - failed);
  return failed == 0 ? 0 : 1;
}
