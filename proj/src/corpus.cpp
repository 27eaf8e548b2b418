#include "kinmo/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "kinmo/constraint.hpp"
#include "kinmo/error.hpp"
#include "kinmo/kinematics.hpp"
#include "kinmo/motion_io.hpp"
#include "kinmo/reasoner.hpp"

namespace kinmo {

FeatureNormalizer FeatureNormalizer::fit(const Corpus& corpus, double std_floor) {
  if (corpus.empty()) throw InvalidMotion("cannot fit a normalizer on an empty corpus");
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(layout::kFeatureDim);
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(layout::kFeatureDim);
  double n = 0.0;
  for (const auto& e : corpus) {
    sum += e.motion.features().colwise().sum();
    sq += e.motion.features().array().square().matrix().colwise().sum();
    n += e.motion.frames();
  }
  FeatureNormalizer out;
  out.mean = sum / n;
  const Eigen::RowVectorXd var = (sq / n - out.mean.array().square().matrix()).cwiseMax(0.0);
  out.stddev = var.cwiseSqrt().cwiseMax(std_floor);
  return out;
}

Eigen::MatrixXd FeatureNormalizer::apply(const Eigen::MatrixXd& features) const {
  if (!fitted()) throw NotFitted("feature normalizer has not been fitted");
  return (features.rowwise() - mean).array().rowwise() / stddev.array();
}

Eigen::MatrixXd FeatureNormalizer::invert(const Eigen::MatrixXd& normalized) const {
  if (!fitted()) throw NotFitted("feature normalizer has not been fitted");
  return (normalized.array().rowwise() * stddev.array()).matrix().rowwise() + mean;
}

MotionSequence FeatureNormalizer::to_motion(const Eigen::MatrixXd& normalized) const {
  Eigen::MatrixXd f = invert(normalized);
  f.middleCols(layout::kFootContacts, 4) = f.middleCols(layout::kFootContacts, 4).cwiseMax(0.0).cwiseMin(1.0);
  return MotionSequence(std::move(f));
}

}  // namespace kinmo

namespace kinmo {
namespace {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw FormatError("cannot write " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> out;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

void save_split(const fs::path& dir, const std::string& split, const std::vector<std::string>& names) {
  std::string text;
  for (const auto& n : names) text += n + "\n";
  write_text(dir / (split + ".txt"), text);
}

void save_corpus(const fs::path& dir, const Corpus& corpus) {
  fs::create_directories(dir / "motions");
  fs::create_directories(dir / "annotations");
  std::vector<std::string> names;
  for (const auto& e : corpus) {
    if (e.name.empty() || e.name.find_first_of("/\\\n") != std::string::npos)
      throw FormatError("corpus entry name '" + e.name + "' is not a valid file stem");
    save_motion(dir / "motions" / (e.name + ".kmot"), e.motion);
    write_text(dir / "annotations" / (e.name + ".txt"), format_annotation(e.annotation));
    names.push_back(e.name);
  }
  std::string manifest;
  for (const auto& n : names) manifest += n + "\n";
  write_text(dir / "manifest.txt", manifest);
}

void save_constraints(const fs::path& dir, const Corpus& corpus, const std::vector<TrajectoryConstraint>& constraints) {
  if (constraints.size() != corpus.size()) throw FormatError("one constraint per corpus entry expected");
  fs::create_directories(dir / "constraints");
  for (std::size_t i = 0; i < corpus.size(); ++i)
    write_constraint(dir / "constraints" / (corpus[i].name + ".traj"), constraints[i]);
}

Corpus load_corpus(const fs::path& dir, const std::string& split) {
  const fs::path list = dir / (split == "all" ? "manifest.txt" : split + ".txt");
  if (!fs::exists(list)) throw FormatError("corpus " + dir.string() + " has no " + list.filename().string());
  Corpus corpus;
  for (const auto& name : read_lines(list)) {
    CorpusEntry e;
    e.name = name;
    e.motion = load_motion(dir / "motions" / (name + ".kmot"));
    e.annotation = parse_annotation(read_text(dir / "annotations" / (name + ".txt")));
    corpus.push_back(std::move(e));
  }
  return corpus;
}

std::vector<std::pair<std::string, TrajectoryConstraint>> load_constraints(const fs::path& dir, const Corpus& corpus) {
  std::vector<std::pair<std::string, TrajectoryConstraint>> out;
  for (const auto& e : corpus) {
    const fs::path p = dir / "constraints" / (e.name + ".traj");
    if (fs::exists(p)) out.emplace_back(e.name, read_constraint(p, e.motion.frames()));
  }
  return out;
}

IngestResult ingest_humanml3d(const fs::path& dir, ReasonerClient& reasoner) {
  const fs::path vec_dir = dir / "new_joint_vecs";
  if (!fs::is_directory(vec_dir)) throw IngestError(dir.string() + " has no new_joint_vecs directory");
  std::vector<std::string> ids;
  for (const auto& f : fs::directory_iterator(vec_dir))
    if (f.path().extension() == ".npy") ids.push_back(f.path().stem().string());
  std::sort(ids.begin(), ids.end());

  IngestResult out;
  std::map<std::string, std::vector<std::string>> produced;
  for (const auto& id : ids) {
    const fs::path npy = vec_dir / (id + ".npy");
    Eigen::MatrixXd features;
    try {
      features = read_npy(npy);
    } catch (const Error& e) {
      throw IngestError(npy.string() + ": " + e.what());
    }
    if (features.cols() != layout::kFeatureDim)
      throw IngestError(npy.string() + ": row width " + std::to_string(features.cols()) + ", expected 263");
    const fs::path text_path = dir / "texts" / (id + ".txt");
    if (!fs::exists(text_path)) throw IngestError(text_path.string() + " is missing");

    // Captions grouped by clip range; [0, 0] is the whole sequence.
    std::map<std::pair<double, double>, std::vector<std::string>> clips;
    for (const auto& line : read_lines(text_path)) {
      std::vector<std::string> fields;
      std::stringstream ss(line);
      std::string f;
      while (std::getline(ss, f, '#')) fields.push_back(f);
      if (fields.size() != 4 || fields[0].empty())
        throw IngestError(text_path.string() + ": expected caption#tokens#start#end, got '" + line + "'");
      double start = 0, end = 0;
      try {
        start = std::stod(fields[2]);
        end = std::stod(fields[3]);
      } catch (const std::exception&) {
        throw IngestError(text_path.string() + ": bad clip range in '" + line + "'");
      }
      if (std::isnan(start) || std::isnan(end)) start = end = 0;
      clips[{start, end}].push_back(fields[0]);
    }
    if (clips.empty()) throw IngestError(text_path.string() + " has no captions");

    int clip_index = 0;
    for (const auto& [range, captions] : clips) {
      Eigen::MatrixXd clip = features;
      std::string name = id;
      if (!(range.first == 0.0 && range.second == 0.0)) {
        const auto t0 = static_cast<Eigen::Index>(std::floor(range.first * kFramesPerSecond));
        const auto t1 = std::min<Eigen::Index>(features.rows(),
                                               static_cast<Eigen::Index>(std::floor(range.second * kFramesPerSecond)));
        if (t0 < 0 || t1 - t0 < 1) continue;
        clip = features.middleRows(t0, t1 - t0);
        name = id + "_" + std::to_string(clip_index);
      }
      ++clip_index;
      CorpusEntry e;
      e.name = name;
      try {
        e.motion = MotionSequence(clip);
      } catch (const Error& err) {
        throw IngestError(npy.string() + ": " + err.what());
      }
      const fs::path ann = dir / "annotations" / (name + ".txt");
      if (fs::exists(ann)) {
        e.annotation = parse_annotation(read_text(ann));
        e.annotation.global_texts = captions;
      } else {
        e.annotation = reasoner.expand(captions.front());
        e.annotation.global_texts = captions;
      }
      e.annotation.validate();
      produced[id].push_back(name);
      out.corpus.push_back(std::move(e));
    }
  }

  auto expand = [&](const std::vector<std::string>& split_ids) {
    std::vector<std::string> names;
    for (const auto& id : split_ids) {
      const auto it = produced.find(id);
      if (it != produced.end()) names.insert(names.end(), it->second.begin(), it->second.end());
    }
    return names;
  };
  if (fs::exists(dir / "train.txt") && fs::exists(dir / "val.txt") && fs::exists(dir / "test.txt")) {
    out.train = expand(read_lines(dir / "train.txt"));
    out.val = expand(read_lines(dir / "val.txt"));
    out.test = expand(read_lines(dir / "test.txt"));
  } else {
    const std::size_t n = ids.size();
    const auto n_train = static_cast<std::size_t>(std::llround(0.80 * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(0.05 * static_cast<double>(n)));
    out.train = expand({ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train)});
    out.val = expand({ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                      ids.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val))});
    out.test = expand({ids.begin() + static_cast<std::ptrdiff_t>(std::min(n, n_train + n_val)), ids.end()});
  }
  return out;
}

CorpusEntry mirror_entry(const CorpusEntry& entry) {
  CorpusEntry out;
  out.name = entry.name + "_mirror";
  out.motion = mirror_motion(entry.motion);
  out.annotation = mirror_annotation(entry.annotation);
  return out;
}

}  // namespace kinmo
