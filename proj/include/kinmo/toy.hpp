#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kinmo/config.hpp"
#include "kinmo/constraint.hpp"
#include "kinmo/corpus.hpp"
#include "kinmo/rng.hpp"

namespace kinmo {

enum class ToyFamily { Wave, Walk, Squat, Turn, Still };
std::string_view to_string(ToyFamily family);
ToyFamily parse_toy_family(std::string_view name);

struct ToyCorpusSpec {
  int n_pairs = 64;
  std::vector<ToyFamily> families = {ToyFamily::Wave, ToyFamily::Walk, ToyFamily::Squat, ToyFamily::Turn,
                                     ToyFamily::Still};
  int min_frames = 40;
  int max_frames = 64;
  double noise = 0.02;      // stddev (rad) of the static per-joint pose offsets
  double amplitude = 1.0;   // rad; "wide"/"deep"/"long" variants use it in full, others half
  int constraint_stride = 1;

  void validate() const;
  static ToyCorpusSpec from(const Config& config);
  Config to_config() const;
};

// Per-sample attributes; pair i uses family families[i % |families|].
struct ToyAttributes {
  ToyFamily family = ToyFamily::Still;
  int side = 0;       // 0 left, 1 right
  int tempo = 0;      // 0..3; for Still selects the held pose
  int magnitude = 0;  // 0 half amplitude, 1 full
};

ToyAttributes toy_attributes(const ToyCorpusSpec& spec, int index);
std::string toy_caption(const ToyAttributes& attributes);
// Oscillation period in frames for a tempo index.
int toy_period(int tempo);
double toy_amplitude(const ToyCorpusSpec& spec, const ToyAttributes& attributes);
MotionSequence toy_motion(const ToyCorpusSpec& spec, const ToyAttributes& attributes, int frames, Rng& rng);

struct ToyCorpus {
  Corpus corpus;
  std::vector<TrajectoryConstraint> constraints;  // pelvis trajectory per entry
  std::vector<ToyAttributes> attributes;
};

ToyCorpus make_toy_corpus(const ToyCorpusSpec& spec, std::uint64_t seed);

}  // namespace kinmo
