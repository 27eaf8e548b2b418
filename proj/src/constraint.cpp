#include "kinmo/constraint.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "kinmo/error.hpp"
#include "kinmo/kinematics.hpp"

namespace kinmo {

TrajectoryConstraint TrajectoryConstraint::empty(int frames) {
  if (frames < 1) throw InvalidMotion("constraint needs at least one frame");
  TrajectoryConstraint c;
  c.mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(frames, kNumJoints, false);
  c.targets = Eigen::MatrixXd::Zero(frames, 3 * kNumJoints);
  return c;
}

void TrajectoryConstraint::set(int frame, int joint, const Vec3& position) {
  if (frame < 0 || frame >= frames() || joint < 0 || joint >= kNumJoints)
    throw InvalidMotion("constraint entry (" + std::to_string(frame) + ", " + std::to_string(joint) +
                        ") out of range");
  if (!position.allFinite()) throw InvalidMotion("constraint target must be finite");
  mask(frame, joint) = true;
  targets.block<1, 3>(frame, 3 * joint) = position.transpose();
}

void TrajectoryConstraint::validate() const {
  if (mask.cols() != kNumJoints || targets.rows() != mask.rows() || targets.cols() != 3 * kNumJoints)
    throw InvalidMotion("constraint arrays have inconsistent shapes");
  for (Eigen::Index t = 0; t < mask.rows(); ++t)
    for (int j = 0; j < kNumJoints; ++j) {
      const auto v = targets.block<1, 3>(t, 3 * j);
      if (mask(t, j) ? !v.allFinite() : !v.isZero(0.0))
        throw InvalidMotion("constraint target at frame " + std::to_string(t) + " joint " + std::to_string(j) +
                            (mask(t, j) ? " is not finite" : " is set but inactive"));
    }
}

TrajectoryConstraint constraint_from_motion(const MotionSequence& motion, const JointSkeleton& skeleton,
                                            int joint, int stride) {
  if (stride < 1) throw InvalidMotion("constraint stride must be positive");
  const Eigen::MatrixXd global = local_to_global(motion, skeleton);
  TrajectoryConstraint c = TrajectoryConstraint::empty(motion.frames());
  for (int t = 0; t < motion.frames(); t += stride) c.set(t, joint, joint_at(global, t, joint));
  return c;
}

void write_constraint(const std::filesystem::path& path, const TrajectoryConstraint& c) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "# frames " << c.frames() << "\n" << std::setprecision(9);
  for (int t = 0; t < c.frames(); ++t)
    for (int j = 0; j < kNumJoints; ++j)
      if (c.mask(t, j))
        out << t << ' ' << j << ' ' << c.targets(t, 3 * j) << ' ' << c.targets(t, 3 * j + 1) << ' '
            << c.targets(t, 3 * j + 2) << "\n";
}

TrajectoryConstraint read_constraint(const std::filesystem::path& path, int frames) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  std::string line;
  struct Entry { int t, j; Vec3 p; };
  std::vector<Entry> entries;
  int header_frames = -1;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    if (line.front() == '#') {
      std::string hash, key;
      int n = 0;
      if (ss >> hash >> key >> n && key == "frames") header_frames = n;
      continue;
    }
    Entry e{};
    std::string extra;
    if (!(ss >> e.t >> e.j >> e.p.x() >> e.p.y() >> e.p.z()) || (ss >> extra))
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 'frame joint x y z'");
    entries.push_back(e);
  }
  if (frames < 0) frames = header_frames;
  if (frames < 1) throw FormatError(path.string() + ": frame count unknown");
  TrajectoryConstraint c = TrajectoryConstraint::empty(frames);
  for (const auto& e : entries) c.set(e.t, e.j, e.p);
  return c;
}

}  // namespace kinmo
