#include "kinmo/toy.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "kinmo/error.hpp"
#include "kinmo/kinematics.hpp"
#include "kinmo/reasoner.hpp"

namespace kinmo {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kStandingHeight = 0.92;
const char* const kTempoWords[4] = {"slowly", "steadily", "quickly", "rapidly"};
const char* const kStillPoses[4] = {"raised", "forward", "lowered", "behind"};

Mat3 rot(double angle, const Vec3& axis) { return Eigen::AngleAxisd(angle, axis).toRotationMatrix(); }

struct PoseTrack {
  std::vector<std::array<Mat3, kNumJoints>> frames;
  explicit PoseTrack(int t) : frames(static_cast<std::size_t>(t)) {
    for (auto& f : frames) f.fill(Mat3::Identity());
  }
};

}  // namespace

std::string_view to_string(ToyFamily family) {
  switch (family) {
    case ToyFamily::Wave: return "wave";
    case ToyFamily::Walk: return "walk";
    case ToyFamily::Squat: return "squat";
    case ToyFamily::Turn: return "turn";
    case ToyFamily::Still: return "still";
  }
  return "?";
}

ToyFamily parse_toy_family(std::string_view name) {
  for (auto f : {ToyFamily::Wave, ToyFamily::Walk, ToyFamily::Squat, ToyFamily::Turn, ToyFamily::Still})
    if (to_string(f) == name) return f;
  throw ConfigError("unknown toy family '" + std::string(name) + "'");
}

void ToyCorpusSpec::validate() const {
  if (n_pairs < 1) throw ConfigError("toy corpus needs n_pairs >= 1");
  if (families.empty()) throw ConfigError("toy corpus needs at least one family");
  if (min_frames < 2 || max_frames < min_frames) throw ConfigError("toy frame range is invalid");
  if (!(noise >= 0.0) || !(amplitude > 0.0)) throw ConfigError("toy noise must be >= 0 and amplitude > 0");
  if (constraint_stride < 1) throw ConfigError("toy constraint_stride must be positive");
}

ToyCorpusSpec ToyCorpusSpec::from(const Config& c) {
  ToyCorpusSpec s;
  s.n_pairs = c.get("toy.n_pairs", s.n_pairs);
  s.min_frames = c.get("toy.min_frames", s.min_frames);
  s.max_frames = c.get("toy.max_frames", s.max_frames);
  s.noise = c.get("toy.noise", s.noise);
  s.amplitude = c.get("toy.amplitude", s.amplitude);
  s.constraint_stride = c.get("toy.constraint_stride", s.constraint_stride);
  if (c.has("toy.families")) {
    s.families.clear();
    const std::string list = c.get("toy.families", std::string());
    std::size_t pos = 0;
    while (pos <= list.size()) {
      const auto end = std::min(list.find(',', pos), list.size());
      if (end > pos) s.families.push_back(parse_toy_family(list.substr(pos, end - pos)));
      pos = end + 1;
    }
  }
  s.validate();
  return s;
}

Config ToyCorpusSpec::to_config() const {
  Config c;
  c.set("toy.n_pairs", n_pairs);
  c.set("toy.min_frames", min_frames);
  c.set("toy.max_frames", max_frames);
  c.set("toy.noise", noise);
  c.set("toy.amplitude", amplitude);
  c.set("toy.constraint_stride", constraint_stride);
  std::string list;
  for (auto f : families) list += (list.empty() ? "" : ",") + std::string(to_string(f));
  c.set("toy.families", list);
  return c;
}

ToyAttributes toy_attributes(const ToyCorpusSpec& spec, int index) {
  const int nf = static_cast<int>(spec.families.size());
  const int k = index / nf;
  return {spec.families[static_cast<std::size_t>(index % nf)], k % 2, (k / 2) % 4, (k / 8) % 2};
}

std::string toy_caption(const ToyAttributes& a) {
  // Varying words sit between fixed first and last words so any single change
  // alters three hashed features out of at most eleven.
  const std::string side = a.side == 0 ? "left" : "right";
  const std::string tempo = kTempoWords[a.tempo];
  switch (a.family) {
    case ToyFamily::Wave:
      return "waves " + side + " arm " + tempo + (a.magnitude ? " widely" : " gently") + " overhead";
    case ToyFamily::Walk:
      return "walks " + tempo + (a.magnitude ? " long" : " short") + " strides " + side + " first";
    case ToyFamily::Squat:
      return "squats " + tempo + (a.magnitude ? " deep " : " shallow ") + side + " arm forward";
    case ToyFamily::Turn:
      return "turns " + side + " " + tempo + (a.magnitude ? " sharply" : " slightly") + " around";
    case ToyFamily::Still:
      return "holds " + side + " arm " + kStillPoses[a.tempo] + (a.magnitude ? " fully" : " slightly") + " still";
  }
  return {};
}

int toy_period(int tempo) {
  static const int periods[4] = {40, 30, 20, 14};
  return periods[std::clamp(tempo, 0, 3)];
}

double toy_amplitude(const ToyCorpusSpec& spec, const ToyAttributes& a) {
  return spec.amplitude * (a.magnitude ? 1.0 : 0.5);
}

MotionSequence toy_motion(const ToyCorpusSpec& spec, const ToyAttributes& a, int frames, Rng& rng) {
  const JointSkeleton& skel = JointSkeleton::smpl22();
  const Vec3 ux = Vec3::UnitX(), uy = Vec3::UnitY(), uz = Vec3::UnitZ();
  const double amp = toy_amplitude(spec, a);
  const double omega = 2.0 * kPi / toy_period(a.tempo);
  const bool right = a.side == 1;
  const double sign = right ? -1.0 : 1.0;  // mirrors rotations about y and z
  const int shoulder = right ? 17 : 16;

  std::array<Mat3, kNumJoints> offset;
  for (auto& m : offset) {
    const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    m = rot(spec.noise * rng.normal(), axis);
  }

  PoseTrack pose(frames);
  RootState root = RootState::still(frames, kStandingHeight);
  const double thigh = skel.rest_offsets[4].norm();
  const double shin = skel.rest_offsets[7].norm();

  for (int t = 0; t < frames; ++t) {
    auto& p = pose.frames[static_cast<std::size_t>(t)];
    const double s = std::sin(omega * t);
    switch (a.family) {
      case ToyFamily::Wave:
        p[shoulder] = rot(sign * amp * s, uz);
        break;
      case ToyFamily::Walk: {
        const double swing = 0.6 * amp * s * (right ? -1.0 : 1.0);
        p[1] = rot(-swing, ux);
        p[2] = rot(swing, ux);
        p[4] = rot(0.8 * amp * std::max(0.0, -s * (right ? -1.0 : 1.0)), ux);
        p[5] = rot(0.8 * amp * std::max(0.0, s * (right ? -1.0 : 1.0)), ux);
        p[16] = rot(-1.2, uz) * rot(swing, ux);
        p[17] = rot(1.2, uz) * rot(-swing, ux);
        root.linear_velocity(t, 1) = 2.0 * (0.4 + 0.3 * a.magnitude) / toy_period(a.tempo);
        break;
      }
      case ToyFamily::Squat: {
        const double theta = amp * 0.5 * (1.0 - std::cos(omega * t));
        for (int hip : {1, 2}) p[hip] = rot(-theta, ux);
        for (int knee : {4, 5}) p[knee] = rot(2.0 * theta, ux);
        for (int ankle : {7, 8}) p[ankle] = rot(-theta, ux);
        p[shoulder] = rot(-sign * 0.5 * kPi * theta / amp, uy);
        root.height(t) = kStandingHeight - (thigh + shin) * (1.0 - std::cos(theta));
        break;
      }
      case ToyFamily::Turn: {
        const double duration = std::min<double>(frames, 1.5 * toy_period(a.tempo));
        const double total = (a.magnitude ? 1.0 : 1.0 / 3.0) * kPi;
        if (t < duration)
          root.angular_velocity(t) = sign * total * kPi / (2.0 * duration) * std::sin(kPi * t / duration);
        break;
      }
      case ToyFamily::Still: {
        const double hold = 1.2 * (a.magnitude ? 1.0 : 0.5);
        switch (a.tempo) {
          case 0: p[shoulder] = rot(sign * hold, uz); break;
          case 1: p[shoulder] = rot(-sign * hold, uy); break;
          case 2: p[shoulder] = rot(-sign * hold, uz); break;
          default: p[shoulder] = rot(sign * hold, uy); break;
        }
        break;
      }
    }
  }

  Eigen::MatrixXd rotations(frames, 6 * (kNumJoints - 1));
  for (int t = 0; t < frames; ++t)
    for (int j = 1; j < kNumJoints; ++j)
      rotations.block<1, 6>(t, 6 * (j - 1)) =
          rotation_to_6d(offset[static_cast<std::size_t>(j)] * pose.frames[static_cast<std::size_t>(t)][j])
              .transpose();
  return assemble_motion(rotations, root, skel);
}

ToyCorpus make_toy_corpus(const ToyCorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ToyCorpus out;
  const int steps = (spec.max_frames - spec.min_frames) / 4 + 1;
  for (int i = 0; i < spec.n_pairs; ++i) {
    Rng sample_rng = rng.fork();
    const ToyAttributes a = toy_attributes(spec, i);
    const int frames = spec.min_frames + 4 * static_cast<int>(sample_rng.index(static_cast<std::size_t>(steps)));
    CorpusEntry entry;
    char name[32];
    std::snprintf(name, sizeof(name), "toy_%04d", i);
    entry.name = name;
    entry.motion = toy_motion(spec, a, frames, sample_rng);
    entry.annotation = template_reasoner_stub(toy_caption(a));
    out.constraints.push_back(
        constraint_from_motion(entry.motion, JointSkeleton::smpl22(), 0, spec.constraint_stride));
    out.corpus.push_back(std::move(entry));
    out.attributes.push_back(a);
  }
  return out;
}

}  // namespace kinmo
