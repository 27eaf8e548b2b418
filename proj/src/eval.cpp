#include "kinmo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "kinmo/control.hpp"
#include "kinmo/error.hpp"
#include "kinmo/kinematics.hpp"
#include "kinmo/rng.hpp"

namespace kinmo {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---- retrieval ----

RetrievalProtocol RetrievalProtocol::all_threshold(double threshold) {
  RetrievalProtocol p;
  p.kind = Kind::AllThreshold;
  p.threshold = threshold;
  return p;
}

RetrievalProtocol RetrievalProtocol::dissimilar_subset(int n) {
  RetrievalProtocol p;
  p.kind = Kind::DissimilarSubset;
  p.subset = n;
  return p;
}

RetrievalProtocol RetrievalProtocol::small_batches(int batch, std::uint64_t seed) {
  RetrievalProtocol p;
  p.kind = Kind::SmallBatches;
  p.batch = batch;
  p.seed = seed;
  return p;
}

std::string RetrievalProtocol::name() const {
  switch (kind) {
    case Kind::All: return "all";
    case Kind::AllThreshold: return "all_threshold";
    case Kind::DissimilarSubset: return "dissimilar_subset";
    case Kind::SmallBatches: return "small_batches";
  }
  return "all";
}

RetrievalProtocol RetrievalProtocol::parse(const std::string& name) {
  if (name == "all") return all();
  if (name == "all_threshold") return all_threshold();
  if (name == "dissimilar_subset") return dissimilar_subset();
  if (name == "small_batches") return small_batches();
  throw ConfigError("unknown retrieval protocol '" + name +
                    "' (expected all, all_threshold, dissimilar_subset or small_batches)");
}

void RetrievalProtocol::validate() const {
  if (!(threshold > 0.0) || subset < 1 || batch < 1) throw ConfigError("retrieval protocol parameters must be positive");
}

std::vector<int> ground_truth_ranks(const MatrixXd& scores) {
  if (scores.rows() != scores.cols()) throw DimError("retrieval needs a square similarity matrix");
  std::vector<int> ranks(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double own = scores(i, i);
    int rank = 1;
    for (Eigen::Index j = 0; j < scores.cols(); ++j)
      if (scores(i, j) > own || (j < i && scores(i, j) == own)) ++rank;
    ranks[static_cast<std::size_t>(i)] = rank;
  }
  return ranks;
}

namespace {

// Rank of the first retrieved item that counts as correct: the ground truth
// itself or any item whose caption similarity reaches the threshold.
std::vector<int> threshold_ranks(const MatrixXd& scores, const MatrixXd& sims, double threshold) {
  const Eigen::Index n = scores.rows();
  std::vector<int> ranks(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return scores(i, a) > scores(i, b); });
    for (std::size_t r = 0; r < order.size(); ++r) {
      const Eigen::Index j = order[r];
      if (j == i || sims(i, j) >= threshold) {
        ranks[static_cast<std::size_t>(i)] = static_cast<int>(r) + 1;
        break;
      }
    }
  }
  return ranks;
}

double median(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RetrievalReport summarize(const std::string& direction, const std::vector<int>& ranks) {
  RetrievalReport r;
  r.direction = direction;
  for (int k : kRecallRanks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](int rank) { return rank <= k; });
    r.recall_at[k] = 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  r.med_rank = median(ranks);
  return r;
}

MatrixXd submatrix(const MatrixXd& m, const std::vector<Eigen::Index>& idx) {
  MatrixXd out(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a)
    for (std::size_t b = 0; b < idx.size(); ++b)
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = m(idx[a], idx[b]);
  return out;
}

}  // namespace

RetrievalResult retrieval_report(const MatrixXd& s, const RetrievalProtocol& protocol,
                                 const std::optional<MatrixXd>& text_sims) {
  protocol.validate();
  if (s.rows() != s.cols() || s.rows() == 0) throw DimError("retrieval needs a nonempty square similarity matrix");
  using Kind = RetrievalProtocol::Kind;
  const bool needs_sims = protocol.kind == Kind::AllThreshold || protocol.kind == Kind::DissimilarSubset;
  if (needs_sims && !text_sims) throw DimError("protocol " + protocol.name() + " needs caption similarities");
  if (text_sims && (text_sims->rows() != s.rows() || text_sims->cols() != s.cols()))
    throw DimError("caption similarity matrix does not match the retrieval matrix");

  std::vector<int> t2m, m2t;
  switch (protocol.kind) {
    case Kind::All:
      t2m = ground_truth_ranks(s);
      m2t = ground_truth_ranks(s.transpose());
      break;
    case Kind::AllThreshold:
      t2m = threshold_ranks(s, *text_sims, protocol.threshold);
      m2t = threshold_ranks(s.transpose(), text_sims->transpose(), protocol.threshold);
      break;
    case Kind::DissimilarSubset: {
      const Eigen::Index n = s.rows();
      std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
      std::iota(idx.begin(), idx.end(), Eigen::Index{0});
      if (protocol.subset < n) {
        // Least similar = lowest caption similarity to any other item.
        VectorXd closest = VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) closest(i) = std::max(closest(i), (*text_sims)(i, j));
        std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return closest(a) < closest(b); });
        idx.resize(static_cast<std::size_t>(protocol.subset));
        std::sort(idx.begin(), idx.end());
      }
      const MatrixXd sub = submatrix(s, idx);
      t2m = ground_truth_ranks(sub);
      m2t = ground_truth_ranks(sub.transpose());
      break;
    }
    case Kind::SmallBatches: {
      const auto n = static_cast<std::size_t>(s.rows());
      const auto b = static_cast<std::size_t>(protocol.batch);
      if (n < b) throw InsufficientSamples("small-batch retrieval needs at least " + std::to_string(b) + " pairs");
      std::vector<Eigen::Index> order(n);
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      Rng rng(protocol.seed);
      rng.shuffle(order);
      for (std::size_t start = 0; start + b <= n; start += b) {
        const MatrixXd sub =
            submatrix(s, std::vector<Eigen::Index>(order.begin() + static_cast<long>(start),
                                                   order.begin() + static_cast<long>(start + b)));
        for (int r : ground_truth_ranks(sub)) t2m.push_back(r);
        for (int r : ground_truth_ranks(sub.transpose())) m2t.push_back(r);
      }
      break;
    }
  }
  return {summarize("text_to_motion", t2m), summarize("motion_to_text", m2t)};
}

// ---- generation ----

FeatureMoments feature_moments(const MatrixXd& x) {
  if (x.rows() < 2) throw InsufficientSamples("moments need at least two samples");
  FeatureMoments m;
  m.mean = x.colwise().mean().transpose();
  const MatrixXd centered = x.rowwise() - m.mean.transpose();
  m.cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  return m;
}

namespace {

void check_covariance(const MatrixXd& c, const char* name) {
  if (c.rows() != c.cols()) throw InvalidCovariance(std::string(name) + " is not square");
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw InvalidCovariance(std::string(name) + " is not symmetric");
}

}  // namespace

MatrixXd psd_sqrt(const MatrixXd& m) {
  check_covariance(m, "matrix");
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (m + m.transpose()));
  VectorXd values = eig.eigenvalues();
  const double tol = 1e-8 * std::max(1.0, values.cwiseAbs().maxCoeff());
  if (values.size() > 0 && values.minCoeff() < -tol)
    throw InvalidCovariance("matrix has eigenvalue " + std::to_string(values.minCoeff()));
  values = values.cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

double fid(const VectorXd& mean1, const MatrixXd& cov1, const VectorXd& mean2, const MatrixXd& cov2) {
  check_covariance(cov1, "cov1");
  check_covariance(cov2, "cov2");
  const Eigen::Index d = mean1.size();
  if (mean2.size() != d || cov1.rows() != d || cov2.rows() != d) throw DimError("fid: moment dimensions differ");
  // Tr (S1 S2)^{1/2} = Tr (S1^{1/2} S2 S1^{1/2})^{1/2}, which stays symmetric.
  const MatrixXd r1 = psd_sqrt(cov1);
  const MatrixXd inner = r1 * cov2 * r1;
  const double cross = psd_sqrt(0.5 * (inner + inner.transpose())).trace();
  const double value = (mean1 - mean2).squaredNorm() + cov1.trace() + cov2.trace() - 2.0 * cross;
  return std::max(0.0, value);
}

double fid(const FeatureMoments& a, const FeatureMoments& b) { return fid(a.mean, a.cov, b.mean, b.cov); }

namespace {

void check_paired(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimError("paired features differ in shape");
}

}  // namespace

RPrecision r_precision(const MatrixXd& text, const MatrixXd& motion, int pool, std::uint64_t seed) {
  check_paired(text, motion);
  if (pool < 1) throw ConfigError("r_precision pool must be positive");
  const auto n = static_cast<std::size_t>(text.rows());
  const auto b = static_cast<std::size_t>(pool);
  if (n < b) throw InsufficientSamples("r_precision needs at least " + std::to_string(pool) + " pairs");
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::array<double, 3> hits{};
  std::size_t queries = 0;
  VectorXd dist(pool);
  for (std::size_t start = 0; start + b <= n; start += b) {
    for (std::size_t i = 0; i < b; ++i) {
      const Eigen::Index ti = order[start + i];
      for (std::size_t j = 0; j < b; ++j)
        dist(static_cast<Eigen::Index>(j)) = (text.row(ti) - motion.row(order[start + j])).norm();
      const double own = dist(static_cast<Eigen::Index>(i));
      int rank = 1;
      for (std::size_t j = 0; j < b; ++j) {
        const double d = dist(static_cast<Eigen::Index>(j));
        if (d < own || (j < i && d == own)) ++rank;
      }
      for (int k = 0; k < 3; ++k) hits[static_cast<std::size_t>(k)] += rank <= k + 1 ? 1.0 : 0.0;
      ++queries;
    }
  }
  const double q = static_cast<double>(queries);
  return {hits[0] / q, hits[1] / q, hits[2] / q};
}

double mm_dist(const MatrixXd& text, const MatrixXd& motion) {
  check_paired(text, motion);
  if (text.rows() == 0) throw InsufficientSamples("mm_dist needs at least one pair");
  return (text - motion).rowwise().norm().mean();
}

double diversity(const MatrixXd& features, int pairs, std::uint64_t seed) {
  if (pairs < 1) throw ConfigError("diversity needs a positive pair count");
  if (features.rows() < 2 * pairs)
    throw InsufficientSamples("diversity needs " + std::to_string(2 * pairs) + " samples, got " +
                              std::to_string(features.rows()));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(features.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  rng.shuffle(order);
  double total = 0.0;
  for (int p = 0; p < pairs; ++p)
    total += (features.row(order[2 * static_cast<std::size_t>(p)]) - features.row(order[2 * static_cast<std::size_t>(p) + 1])).norm();
  return total / pairs;
}

double mmodality(const std::vector<MatrixXd>& groups) {
  if (groups.empty()) throw InsufficientSamples("mmodality needs at least one caption");
  double total = 0.0;
  for (const auto& g : groups) {
    if (g.rows() < 2) throw InsufficientSamples("mmodality needs two or more repeats per caption");
    double sum = 0.0;
    for (Eigen::Index a = 0; a < g.rows(); ++a)
      for (Eigen::Index b = a + 1; b < g.rows(); ++b) sum += (g.row(a) - g.row(b)).norm();
    total += sum / (0.5 * static_cast<double>(g.rows() * (g.rows() - 1)));
  }
  return total / static_cast<double>(groups.size());
}

// ---- control ----

ControlReport control_metrics(const std::vector<MatrixXd>& pred, const std::vector<TrajectoryConstraint>& constraints,
                              double threshold) {
  if (pred.size() != constraints.size()) throw DimError("control_metrics: prediction and constraint counts differ");
  if (!(threshold > 0.0)) throw ConfigError("control threshold must be positive");
  std::size_t samples = 0, failed = 0, entries = 0, far = 0;
  double sum = 0.0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    if (constraints[s].active_count() == 0) continue;
    const VectorXd err = active_errors(pred[s], constraints[s]);
    const auto over = static_cast<std::size_t>((err.array() > threshold).count());
    ++samples;
    failed += over > 0 ? 1 : 0;
    entries += static_cast<std::size_t>(err.size());
    far += over;
    sum += err.sum();
  }
  if (entries == 0) throw EmptyMask("control_metrics: no active joint in any sample");
  ControlReport r;
  r.traj_err_50cm = static_cast<double>(failed) / static_cast<double>(samples);
  r.loc_err_50cm = static_cast<double>(far) / static_cast<double>(entries);
  r.avg_err = sum / static_cast<double>(entries);
  return r;
}

ControlReport control_metrics(const std::vector<MotionSequence>& pred, const std::vector<TrajectoryConstraint>& constraints,
                              const JointSkeleton& skeleton, double threshold) {
  std::vector<MatrixXd> global;
  global.reserve(pred.size());
  for (const auto& m : pred) global.push_back(local_to_global(m, skeleton));
  return control_metrics(global, constraints, threshold);
}

// ---- editing ----

double cosine(const VectorXd& a, const VectorXd& b) {
  if (a.size() != b.size()) throw DimError("cosine: vector sizes differ");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw ZeroNormEmbedding("cosine of a zero vector");
  return a.dot(b) / (na * nb);
}

double htma_s(const MotionSequence& edited, const std::string& target_text, const AlignmentModel& alignment) {
  if (!alignment.normalizer().fitted()) throw NotFitted("HTMA-S needs a trained alignment model");
  HierarchicalAnnotation a;
  a.global_texts = {target_text};
  return cosine(embed_motion(edited, alignment), embed_text(a, Level::Global, alignment));
}

// ---- reports ----

void MetricReport::add(const RetrievalResult& r, const std::string& prefix) {
  for (const RetrievalReport* d : {&r.text_to_motion, &r.motion_to_text}) {
    for (const auto& [k, v] : d->recall_at) set(prefix + d->direction + ".recall_at." + std::to_string(k), v);
    set(prefix + d->direction + ".med_rank", d->med_rank);
  }
}

void MetricReport::add(const GenerationReport& g) {
  set("fid", g.fid);
  set("r_precision.top1", g.r_precision.top1);
  set("r_precision.top2", g.r_precision.top2);
  set("r_precision.top3", g.r_precision.top3);
  set("mm_dist", g.mm_dist);
  set("diversity", g.diversity);
  set("mmodality", g.mmodality);
}

void MetricReport::add(const ControlReport& c) {
  set("traj_err_50cm", c.traj_err_50cm);
  set("loc_err_50cm", c.loc_err_50cm);
  set("avg_err", c.avg_err);
}

double MetricReport::number(const std::string& key) const {
  const auto it = numbers_.find(key);
  if (it == numbers_.end()) throw ConfigError("report has no metric '" + key + "'");
  return it->second;
}

std::string MetricReport::dump() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : numbers_) j[k] = v;
  for (const auto& [k, v] : strings_) j[k] = v;
  return j.dump(2) + "\n";
}

void MetricReport::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write report " + path.string());
  out << dump();
}

}  // namespace kinmo
