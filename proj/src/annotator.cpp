#include "kinmo/annotator.hpp"

#include <cmath>
#include <numbers>

#include <httplib.h>
#include <json.hpp>

#include "kinmo/error.hpp"
#include "kinmo/hash.hpp"
#include "kinmo/representation.hpp"

namespace kinmo {
namespace {

WindowSummary summarize(const GroupFeatures& gf, int t0, int t1) {
  WindowSummary s;
  s.displacement = (gf.position.row(t1) - gf.position.row(t0)).transpose();
  double speed = 0.0;
  for (int t = t0; t < t1; ++t) speed += gf.velocity.row(t).norm();
  s.mean_speed = speed / static_cast<double>(t1 - t0);
  const Vec3 a = s.displacement.cwiseAbs();
  s.dominant_axis = Axis::X;
  if (a.y() > a.x()) s.dominant_axis = Axis::Y;
  if (a.z() > std::max(a.x(), a.y())) s.dominant_axis = Axis::Z;
  return s;
}

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    case Axis::Z: return "z";
  }
  return "?";
}

std::string direction_phrase(const WindowSummary& w) {
  if (w.displacement.norm() < StubAnnotator::kStillDisplacement) return std::string(StubAnnotator::kStillText);
  switch (w.dominant_axis) {
    case Axis::X: return w.displacement.x() > 0 ? "moves left" : "moves right";
    case Axis::Y: return w.displacement.y() > 0 ? "moves up" : "moves down";
    case Axis::Z: return w.displacement.z() > 0 ? "moves forward" : "moves backward";
  }
  return "";
}

// Consecutive duplicates collapse; "remains still" alone when nothing moved.
std::string join_phrases(const std::vector<std::string>& phrases, std::string_view still) {
  std::vector<std::string> kept;
  for (const auto& p : phrases)
    if (kept.empty() || kept.back() != p) kept.push_back(p);
  if (kept.empty()) return std::string(still);
  std::string out = kept[0];
  for (std::size_t i = 1; i < kept.size(); ++i) out += ", then " + kept[i];
  return out;
}

double angle_between(const Vec3& a, const Vec3& b) {
  const double c = a.normalized().dot(b.normalized());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace

KeyframeSet select_keyframes(const Eigen::MatrixXd& embeddings, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw InvalidEmbedding("keyframe threshold must lie in (0, 1)");
  if (embeddings.rows() < 1) throw InvalidEmbedding("no frames to select from");
  for (Eigen::Index t = 0; t < embeddings.rows(); ++t)
    if (std::abs(embeddings.row(t).norm() - 1.0) > 1e-6)
      throw InvalidEmbedding("row " + std::to_string(t) + " is not unit-norm");
  KeyframeSet out;
  out.threshold_used = threshold;
  out.indices.push_back(0);
  for (Eigen::Index t = 1; t < embeddings.rows(); ++t) {
    const double cosine = embeddings.row(t).dot(embeddings.row(out.indices.back()));
    if (cosine < threshold) out.indices.push_back(static_cast<int>(t));
  }
  return out;
}

WindowSummary window_motion_estimate(const MotionSequence& motion, KinematicGroup group, int t0,
                                     int t1, const JointSkeleton& skeleton) {
  if (t0 < 0 || t1 <= t0 || t1 >= motion.frames())
    throw InvalidWindow("window [" + std::to_string(t0) + ", " + std::to_string(t1) +
                        "] is empty or outside " + std::to_string(motion.frames()) + " frames");
  return summarize(group_features(motion, skeleton, group), t0, t1);
}

Eigen::VectorXd HashingTextEmbedder::embed(std::string_view text) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dimension_);
  const auto words = tokenize(text);
  auto add = [&](std::string_view feature) {
    const std::uint64_t h = fnv1a(feature);
    v(static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dimension_))) +=
        (h >> 63) != 0 ? 1.0 : -1.0;
  };
  for (std::size_t i = 0; i < words.size(); ++i) {
    add(words[i]);
    if (i + 1 < words.size()) add(words[i] + "_" + words[i + 1]);
  }
  const double n = v.norm();
  if (n == 0.0) {
    v(0) = 1.0;
    return v;
  }
  return v / n;
}

std::string RuleBasedPoseDescriber::describe(const MotionSequence& motion, int frame,
                                             const JointSkeleton& skeleton) const {
  (void)skeleton;
  auto p = [&](int j) { return motion.local_position(frame, j); };
  // Only non-neutral attributes are listed; short phrases keep hashed
  // embeddings of different poses well below the keyframe threshold.
  std::vector<std::string> parts;
  auto arm = [&](const char* side, int shoulder, int wrist) {
    const double rise = p(wrist).y() - p(shoulder).y();
    if (rise > 0.15) parts.push_back(std::string(side) + " arm raised");
    else if (rise < -0.25) parts.push_back(std::string(side) + " arm lowered");
  };
  auto knee = [&](const char* side, int hip, int knee_j, int ankle) {
    const double bend = angle_between(p(knee_j) - p(hip), p(ankle) - p(knee_j));
    if (bend > 40.0 * std::numbers::pi / 180.0) parts.push_back(std::string(side) + " knee bent");
  };
  arm("left", 16, 20);
  arm("right", 17, 21);
  knee("left", 1, 4, 7);
  knee("right", 2, 5, 8);
  const Vec3 trunk = p(9) - p(0);
  if (trunk.z() > 0.08) parts.emplace_back("torso leaning forward");
  else if (trunk.z() < -0.08) parts.emplace_back("torso leaning back");
  else if (trunk.x() > 0.08) parts.emplace_back("torso leaning left");
  else if (trunk.x() < -0.08) parts.emplace_back("torso leaning right");
  if (parts.empty()) return "neutral pose";
  std::string out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) out += ", " + parts[i];
  return out;
}

std::vector<AuditEntry> AnnotatorClient::audit_log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

void AnnotatorClient::add_review_note(std::size_t entry, const std::string& notes) {
  std::lock_guard lock(mutex_);
  if (entry >= log_.size()) throw InvalidAnnotation("no audit entry " + std::to_string(entry));
  if (!log_[entry].reviewer_notes.empty()) log_[entry].reviewer_notes += "\n";
  log_[entry].reviewer_notes += notes;
}

void AnnotatorClient::record(std::string request, std::string response) {
  std::lock_guard lock(mutex_);
  log_.push_back({std::move(request), std::move(response), {}});
}

namespace {

nlohmann::json windows_json(const std::vector<WindowSummary>& windows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& w : windows)
    arr.push_back({{"displacement", {w.displacement.x(), w.displacement.y(), w.displacement.z()}},
                   {"mean_speed", w.mean_speed},
                   {"dominant_axis", axis_name(w.dominant_axis)}});
  return arr;
}

nlohmann::json windows_json(const std::vector<InteractionWindow>& windows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& w : windows)
    arr.push_back({{"start_distance", w.start_distance}, {"end_distance", w.end_distance}});
  return arr;
}

}  // namespace

std::string StubAnnotator::describe(KinematicGroup group, const std::vector<WindowSummary>& windows,
                                    const std::vector<std::string>& pose_texts) {
  std::vector<std::string> phrases;
  for (const auto& w : windows) phrases.push_back(direction_phrase(w));
  // Still windows between moving ones carry no information.
  std::vector<std::string> moving;
  for (auto& p : phrases)
    if (p != kStillText) moving.push_back(p);
  std::string text = join_phrases(moving, kStillText);
  record(nlohmann::json{{"kind", "group"},
                        {"target", to_string(group)},
                        {"windows", windows_json(windows)},
                        {"pose_texts", pose_texts}}
             .dump(),
         text);
  return text;
}

std::string StubAnnotator::describe_interaction(GroupPair pair,
                                                const std::vector<InteractionWindow>& windows,
                                                const std::vector<std::string>& pose_texts) {
  std::vector<std::string> phrases;
  for (const auto& w : windows) {
    const double change = w.end_distance - w.start_distance;
    if (change > kStillDisplacement) phrases.emplace_back("move apart");
    else if (change < -kStillDisplacement) phrases.emplace_back("move closer");
  }
  std::string text = join_phrases(phrases, "keep their distance");
  record(nlohmann::json{{"kind", "interaction"},
                        {"target", to_string(pair)},
                        {"windows", windows_json(windows)},
                        {"pose_texts", pose_texts}}
             .dump(),
         text);
  return text;
}

RemoteAnnotator::RemoteAnnotator(std::string endpoint, std::string api_key, int timeout_seconds)
    : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)), timeout_seconds_(timeout_seconds) {
  if (endpoint_.rfind("http://", 0) != 0 && endpoint_.rfind("https://", 0) != 0)
    throw InvalidAnnotation("remote endpoint must be an http(s) URL: " + endpoint_);
}

std::string RemoteAnnotator::post(const std::string& body) {
  const auto scheme_end = endpoint_.find("://") + 3;
  const auto path_start = endpoint_.find('/', scheme_end);
  const std::string base = endpoint_.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);
  httplib::Client client(base);
  client.set_connection_timeout(timeout_seconds_, 0);
  client.set_read_timeout(timeout_seconds_, 0);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const auto res = client.Post(path, headers, body, "application/json");
  if (!res) throw AnnotationBackendError("request to " + endpoint_ + " failed: " + httplib::to_string(res.error()), 0);
  if (res->status != 200)
    throw AnnotationBackendError("endpoint returned HTTP " + std::to_string(res->status), 0);
  const auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("text") || !reply["text"].is_string())
    throw AnnotationBackendError("reply lacks a string field \"text\"", 0);
  std::string text = reply["text"].get<std::string>();
  record(body, text);
  return text;
}

std::string RemoteAnnotator::describe(KinematicGroup group, const std::vector<WindowSummary>& windows,
                                      const std::vector<std::string>& pose_texts) {
  return post(nlohmann::json{{"kind", "group"},
                             {"target", to_string(group)},
                             {"windows", windows_json(windows)},
                             {"pose_texts", pose_texts}}
                  .dump());
}

std::string RemoteAnnotator::describe_interaction(GroupPair pair,
                                                  const std::vector<InteractionWindow>& windows,
                                                  const std::vector<std::string>& pose_texts) {
  return post(nlohmann::json{{"kind", "interaction"},
                             {"target", to_string(pair)},
                             {"windows", windows_json(windows)},
                             {"pose_texts", pose_texts}}
                  .dump());
}

HierarchicalAnnotation annotate_sequence(const MotionSequence& motion,
                                         const std::vector<std::string>& global_texts,
                                         const TextEmbedder& embedder,
                                         const PoseDescriber& pose_describer,
                                         AnnotatorClient& annotator,
                                         const JointSkeleton& skeleton,
                                         const AnnotateOptions& options) {
  motion.validate();
  const int t_count = motion.frames();

  std::vector<std::string> pose_texts(t_count);
  Eigen::MatrixXd embeddings(t_count, embedder.dimension());
  for (int t = 0; t < t_count; ++t) {
    pose_texts[t] = pose_describer.describe(motion, t, skeleton);
    embeddings.row(t) = embedder.embed(pose_texts[t]).transpose();
  }
  const KeyframeSet keys = select_keyframes(embeddings, options.keyframe_threshold);

  // Windows between consecutive keyframes, plus the tail after the last one.
  std::vector<std::pair<int, int>> windows;
  for (std::size_t k = 0; k + 1 < keys.indices.size(); ++k)
    windows.emplace_back(keys.indices[k], keys.indices[k + 1]);
  if (keys.indices.back() < t_count - 1) windows.emplace_back(keys.indices.back(), t_count - 1);

  std::vector<std::string> key_texts;
  for (int k : keys.indices) key_texts.push_back(pose_texts[k]);

  auto with_retries = [&](auto&& call) -> std::string {
    for (int attempt = 0;; ++attempt) {
      try {
        return call();
      } catch (const std::exception& e) {
        if (attempt >= options.max_retries) throw AnnotationBackendError(e.what(), attempt);
      }
    }
  };

  const Decomposition d = decompose(motion, skeleton, GroupConnectivity::standard());
  HierarchicalAnnotation out;
  out.global_texts = global_texts;
  for (auto g : kAllGroups) {
    std::vector<WindowSummary> summaries;
    if (windows.empty()) summaries.push_back(WindowSummary{});
    for (const auto& [a, b] : windows) summaries.push_back(summarize(d.groups.at(g), a, b));
    out.joint(g) = with_retries([&] { return annotator.describe(g, summaries, key_texts); });
  }
  for (const auto& p : all_group_pairs()) {
    const Eigen::MatrixXd& dp = d.pairs.at(p).delta_position;
    std::vector<InteractionWindow> iw;
    if (windows.empty()) iw.push_back({dp.row(0).norm(), dp.row(0).norm()});
    for (const auto& [a, b] : windows) iw.push_back({dp.row(a).norm(), dp.row(b).norm()});
    out.interaction(p) = with_retries([&] { return annotator.describe_interaction(p, iw, key_texts); });
  }
  out.validate();
  return out;
}

}  // namespace kinmo
