#include <atomic>
#include <numbers>
#include <thread>

#include <Eigen/Geometry>
#include <gtest/gtest.h>
// after Eigen: resolv.h defines a _res macro
#include <httplib.h>
#include <json.hpp>

#include "fixtures.hpp"
#include "kinmo/annotation.hpp"
#include "kinmo/annotator.hpp"
#include "kinmo/error.hpp"
#include "kinmo/kinematics.hpp"

namespace kinmo {
namespace {

using testing::identity_rotations;

const JointSkeleton& skel() { return JointSkeleton::smpl22(); }

Eigen::RowVectorXd unit(int dim, int axis) {
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(dim);
  v(axis) = 1.0;
  return v;
}

MotionSequence left_arm_wave(int frames) {
  Eigen::MatrixXd rot = identity_rotations(frames);
  for (int t = 0; t < frames; ++t) {
    const double angle = 1.2 * std::sin(2.0 * std::numbers::pi * t / 40.0);
    const Mat3 r = Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
    rot.block<1, 6>(t, 6 * (16 - 1)) = rotation_to_6d(r).transpose();
  }
  return assemble_motion(rot, RootState::still(frames, 0.95), skel());
}

HierarchicalAnnotation sample_annotation() {
  HierarchicalAnnotation a;
  a.global_texts = {"a person raises the left arm", "someone lifts a hand"};
  for (auto g : kAllGroups) a.joint(g) = std::string(to_string(g)) + " text";
  for (const auto& p : all_group_pairs()) a.interaction(p) = "pair " + to_string(p);
  a.joint(KinematicGroup::LeftArm) = "left arm moves up";
  return a;
}

TEST(Keyframes, IdenticalRowsGiveOnlyFrameZero) {
  Eigen::MatrixXd e(6, 3);
  for (int t = 0; t < 6; ++t) e.row(t) = Eigen::RowVector3d(0.6, 0.8, 0.0);
  EXPECT_EQ(select_keyframes(e, 0.9).indices, std::vector<int>{0});
}

TEST(Keyframes, ComparesAgainstMostRecentKeyframe) {
  // Frames 0,1,2,4 equal e0; frame 3 is e1 (orthogonal). Frame 3 has cosine 0
  // to keyframe 0, and frame 4 has cosine 0 to keyframe 3.
  Eigen::MatrixXd e(5, 2);
  e << unit(2, 0), unit(2, 0), unit(2, 0), unit(2, 1), unit(2, 0);
  const KeyframeSet k = select_keyframes(e, 0.9);
  EXPECT_EQ(k.indices, (std::vector<int>{0, 3, 4}));
  EXPECT_DOUBLE_EQ(k.threshold_used, 0.9);
}

TEST(Keyframes, ThresholdNearOneFlagsEveryGenericFrame) {
  Rng rng(31);
  Eigen::MatrixXd e(20, 8);
  for (int t = 0; t < 20; ++t) {
    for (int c = 0; c < 8; ++c) e(t, c) = rng.normal();
    e.row(t).normalize();
  }
  EXPECT_EQ(select_keyframes(e, 1.0 - 1e-9).indices.size(), 20u);
}

TEST(Keyframes, AppendingCopiesOfLastKeyframeChangesNothing) {
  Rng rng(32);
  Eigen::MatrixXd e(10, 4);
  for (int t = 0; t < 10; ++t) {
    for (int c = 0; c < 4; ++c) e(t, c) = rng.normal();
    e.row(t).normalize();
  }
  for (double theta : {0.3, 0.6, 0.9}) {
    const KeyframeSet base = select_keyframes(e, theta);
    Eigen::MatrixXd extended(15, 4);
    extended.topRows(10) = e;
    for (int t = 10; t < 15; ++t) extended.row(t) = e.row(base.indices.back());
    // The appended rows equal the last keyframe, which remains the comparison
    // target only if no later frame became a keyframe; they are compared to
    // the final keyframe in either case.
    const KeyframeSet ext = select_keyframes(extended, theta);
    if (base.indices.back() == 9) EXPECT_EQ(ext.indices, base.indices);
    else EXPECT_GE(ext.indices.size(), base.indices.size());
    for (int t = 10; t < 15; ++t)
      if (base.indices.back() == 9) EXPECT_EQ(std::count(ext.indices.begin(), ext.indices.end(), t), 0);
  }
}

TEST(Keyframes, RepeatedFramesAreNeverKeyframes) {
  Rng rng(33);
  Eigen::MatrixXd e(12, 5);
  for (int t = 0; t < 12; t += 2) {
    for (int c = 0; c < 5; ++c) e(t, c) = rng.normal();
    e.row(t).normalize();
    e.row(t + 1) = e.row(t);
  }
  for (double theta : {0.1, 0.5, 0.99}) {
    const KeyframeSet k = select_keyframes(e, theta);
    for (int idx : k.indices) EXPECT_EQ(idx % 2, 0) << "theta " << theta;
  }
}

TEST(Keyframes, RejectsNonUnitRowsAndBadThreshold) {
  Eigen::MatrixXd e = Eigen::MatrixXd::Ones(2, 2);
  EXPECT_THROW(select_keyframes(e, 0.9), InvalidEmbedding);
  e.row(0) = unit(2, 0);
  e.row(1) = unit(2, 1);
  EXPECT_THROW(select_keyframes(e, 1.0), InvalidEmbedding);
  EXPECT_THROW(select_keyframes(e, 0.0), InvalidEmbedding);
}

TEST(WindowEstimate, StaticMotionHasNoDisplacement) {
  const MotionSequence m = assemble_motion(identity_rotations(8), RootState::still(8, 0.9), skel());
  const WindowSummary w = window_motion_estimate(m, KinematicGroup::RightLeg, 0, 7, skel());
  EXPECT_EQ(w.displacement, Vec3::Zero());
  EXPECT_EQ(w.mean_speed, 0.0);
}

TEST(WindowEstimate, LinearDriftAlongZ) {
  MotionViews v = MotionSequence::zeros(11).views();
  v.rotations_6d = identity_rotations(11);
  for (int t = 0; t < 11; ++t)
    for (int j : skel().members(KinematicGroup::LeftArm)) {
      v.local_positions.block<1, 3>(t, 3 * (j - 1)) << 0.3, 1.2, 0.05 * t;
      v.joint_velocities.block<1, 3>(t, 3 * j) << 0.0, 0.0, 0.05;
    }
  const MotionSequence m = MotionSequence::from_views(v);
  const WindowSummary w = window_motion_estimate(m, KinematicGroup::LeftArm, 0, 10, skel());
  // 10 frames x 0.05 m/frame
  EXPECT_NEAR(w.displacement.z(), 0.5, 1e-12);
  EXPECT_NEAR(w.displacement.x(), 0.0, 1e-12);
  EXPECT_NEAR(w.mean_speed, 0.05, 1e-12);
  EXPECT_EQ(w.dominant_axis, Axis::Z);
}

TEST(WindowEstimate, TieBreaksTowardX) {
  MotionViews v = MotionSequence::zeros(3).views();
  v.rotations_6d = identity_rotations(3);
  for (int j : skel().members(KinematicGroup::Neck))
    v.local_positions.block<1, 3>(2, 3 * (j - 1)) << 0.2, 0.2, 0.0;
  const WindowSummary w =
      window_motion_estimate(MotionSequence::from_views(v), KinematicGroup::Neck, 0, 2, skel());
  EXPECT_EQ(w.displacement, Vec3(0.2, 0.2, 0.0));
  EXPECT_EQ(w.dominant_axis, Axis::X);
}

TEST(WindowEstimate, EmptyWindowIsRejected) {
  const MotionSequence m = MotionSequence::zeros(5);
  EXPECT_THROW(window_motion_estimate(m, KinematicGroup::Torso, 2, 2, skel()), InvalidWindow);
  EXPECT_THROW(window_motion_estimate(m, KinematicGroup::Torso, 0, 5, skel()), InvalidWindow);
}

TEST(Embedder, UnitNormAndDeterministic) {
  HashingTextEmbedder e(64);
  for (const char* s : {"a person walks", "", "left arm raised, right arm level"}) {
    const Eigen::VectorXd v = e.embed(s);
    EXPECT_NEAR(v.norm(), 1.0, 1e-12);
    EXPECT_EQ(v, e.embed(s));
  }
}

TEST(Annotate, StaticMotionIsStillEverywhere) {
  const MotionSequence m = assemble_motion(identity_rotations(20), RootState::still(20, 0.9), skel());
  HashingTextEmbedder embedder;
  RuleBasedPoseDescriber poses;
  StubAnnotator annotator;
  const HierarchicalAnnotation a =
      annotate_sequence(m, {"a person stands still"}, embedder, poses, annotator, skel());
  for (auto g : kAllGroups) EXPECT_EQ(a.joint(g), "remains still");
  EXPECT_EQ(annotator.audit_log().size(), 21u);
}

TEST(Annotate, ArmWaveMentionsUpAndDown) {
  const MotionSequence m = left_arm_wave(80);
  HashingTextEmbedder embedder;
  RuleBasedPoseDescriber poses;
  StubAnnotator annotator;
  const HierarchicalAnnotation a =
      annotate_sequence(m, {"a person waves the left arm"}, embedder, poses, annotator, skel());
  const std::string& text = a.joint(KinematicGroup::LeftArm);
  EXPECT_NE(text.find("moves up"), std::string::npos) << text;
  EXPECT_NE(text.find("moves down"), std::string::npos) << text;
  EXPECT_EQ(a.joint(KinematicGroup::RightArm), "remains still");
  EXPECT_EQ(a.joint(KinematicGroup::LeftLeg), "remains still");
}

TEST(Annotate, SingleFrameMotion) {
  const MotionSequence m = assemble_motion(identity_rotations(1), RootState::still(1, 0.9), skel());
  HashingTextEmbedder embedder;
  RuleBasedPoseDescriber poses;
  StubAnnotator annotator;
  const HierarchicalAnnotation a = annotate_sequence(m, {"a pose"}, embedder, poses, annotator, skel());
  for (auto g : kAllGroups) EXPECT_EQ(a.joint(g), "remains still");
  for (const auto& p : all_group_pairs()) EXPECT_EQ(a.interaction(p), "keep their distance");
}

TEST(Annotate, StubPipelineIsReproducible) {
  const MotionSequence m = left_arm_wave(60);
  HashingTextEmbedder embedder;
  RuleBasedPoseDescriber poses;
  StubAnnotator first, second;
  EXPECT_EQ(format_annotation(annotate_sequence(m, {"wave"}, embedder, poses, first, skel())),
            format_annotation(annotate_sequence(m, {"wave"}, embedder, poses, second, skel())));
}

class FlakyAnnotator final : public AnnotatorClient {
 public:
  std::string describe(KinematicGroup, const std::vector<WindowSummary>&,
                       const std::vector<std::string>&) override {
    ++calls;
    throw std::runtime_error("backend unavailable");
  }
  std::string describe_interaction(GroupPair, const std::vector<InteractionWindow>&,
                                   const std::vector<std::string>&) override {
    return "x";
  }
  int calls = 0;
};

TEST(Annotate, BackendFailureReportsRetries) {
  const MotionSequence m = MotionSequence::zeros(3);
  HashingTextEmbedder embedder;
  RuleBasedPoseDescriber poses;
  FlakyAnnotator annotator;
  AnnotateOptions opts;
  opts.max_retries = 3;
  try {
    annotate_sequence(m, {"x"}, embedder, poses, annotator, skel(), opts);
    FAIL() << "expected AnnotationBackendError";
  } catch (const AnnotationBackendError& e) {
    EXPECT_EQ(e.retries(), 3);
    EXPECT_EQ(annotator.calls, 4);
  }
}

TEST(Annotate, AuditLogAcceptsReviewerNotes) {
  StubAnnotator annotator;
  annotator.describe(KinematicGroup::Neck, {WindowSummary{}}, {"pose"});
  annotator.add_review_note(0, "correct");
  const auto log = annotator.audit_log();
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].response, "remains still");
  EXPECT_EQ(log[0].reviewer_notes, "correct");
  EXPECT_THROW(annotator.add_review_note(5, "x"), InvalidAnnotation);
}

TEST(RemoteAnnotator, PostsJsonAndReadsText) {
  httplib::Server server;
  std::string seen_auth;
  std::string seen_kind;
  server.Post("/annotate", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    seen_kind = body["kind"].get<std::string>();
    res.set_content(nlohmann::json{{"text", "swings " + body["target"].get<std::string>()}}.dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  RemoteAnnotator client("http://127.0.0.1:" + std::to_string(port) + "/annotate", "secret", 5);
  const std::string text = client.describe(KinematicGroup::LeftArm, {WindowSummary{}}, {"pose"});
  server.stop();
  worker.join();
  EXPECT_EQ(text, "swings LeftArm");
  EXPECT_EQ(seen_auth, "Bearer secret");
  EXPECT_EQ(seen_kind, "group");
  EXPECT_EQ(client.audit_log().size(), 1u);
}

TEST(RemoteAnnotator, UnreachableEndpointFails) {
  RemoteAnnotator client("http://127.0.0.1:1/annotate", "", 1);
  EXPECT_THROW(client.describe(KinematicGroup::Neck, {}, {}), AnnotationBackendError);
  EXPECT_THROW(RemoteAnnotator("ftp://host", "", 1), InvalidAnnotation);
}

TEST(AnnotationFile, FormatParseRoundTrip) {
  const HierarchicalAnnotation a = sample_annotation();
  const std::string text = format_annotation(a);
  EXPECT_NE(text.find("[JOINT:LeftArm]\nleft arm moves up\n"), std::string::npos);
  EXPECT_NE(text.find("[INTER:Torso,Neck]\n"), std::string::npos);
  EXPECT_EQ(parse_annotation(text), a);
}

TEST(AnnotationFile, RejectsIncompleteRecords) {
  std::string text = format_annotation(sample_annotation());
  const auto pos = text.find("[JOINT:Neck]");
  const std::string missing = text.substr(0, pos) + text.substr(text.find("[JOINT:LeftArm]"));
  EXPECT_THROW(parse_annotation(missing), InvalidAnnotation);
  EXPECT_THROW(parse_annotation("[BOGUS]\nx\n"), InvalidAnnotation);
  EXPECT_THROW(parse_annotation("orphan line\n"), InvalidAnnotation);
}

TEST(AnnotationFile, MirrorSwapsSidesAndIsAnInvolution) {
  const HierarchicalAnnotation a = sample_annotation();
  const HierarchicalAnnotation m = mirror_annotation(a);
  EXPECT_EQ(m.joint(KinematicGroup::RightArm), "right arm moves up");
  EXPECT_EQ(m.global_texts[0], "a person raises the right arm");
  EXPECT_EQ(m.interaction(GroupPair::of(KinematicGroup::Torso, KinematicGroup::RightLeg)),
            "pair Torso,LeftLeg");
  EXPECT_EQ(mirror_annotation(m), a);
}

}  // namespace
}  // namespace kinmo
