#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "kinmo/skeleton.hpp"

namespace kinmo {

// Three-level text description of one motion.
struct HierarchicalAnnotation {
  std::vector<std::string> global_texts;
  std::array<std::string, kNumGroups> joint_texts;            // indexed by group
  std::array<std::string, kNumGroupPairs> interaction_texts;  // indexed by pair_index

  const std::string& joint(KinematicGroup g) const { return joint_texts[index_of(g)]; }
  std::string& joint(KinematicGroup g) { return joint_texts[index_of(g)]; }
  const std::string& interaction(GroupPair p) const { return interaction_texts[pair_index(p)]; }
  std::string& interaction(GroupPair p) { return interaction_texts[pair_index(p)]; }

  // Throws InvalidAnnotation on missing or empty texts or embedded newlines.
  void validate() const;
  bool operator==(const HierarchicalAnnotation&) const = default;
};

// UTF-8 text record with [GLOBAL], [JOINT:<group>] and [INTER:<g>,<h>]
// sections, one text per line.
std::string format_annotation(const HierarchicalAnnotation& a);
HierarchicalAnnotation parse_annotation(std::string_view text);

// Swaps left/right group slots and the words "left" and "right".
HierarchicalAnnotation mirror_annotation(const HierarchicalAnnotation& a);
std::string swap_left_right_words(std::string_view text);

// Lowercased alphanumeric word tokens.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace kinmo
