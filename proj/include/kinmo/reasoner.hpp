#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "kinmo/annotation.hpp"

namespace kinmo {

// Expands a global caption into joint-group and interaction texts.
class ReasonerClient {
 public:
  virtual ~ReasonerClient() = default;
  // Returns an annotation whose global_texts == {global_text}.
  virtual HierarchicalAnnotation expand(const std::string& global_text) = 0;
};

enum class ActionKind { Wave, Walk, Squat, Turn, Still, Unknown };
enum class Side { Left, Right, None };

// Keywords recognised in a caption.
struct ActionCues {
  ActionKind action = ActionKind::Unknown;
  Side side = Side::None;
  std::string tempo;  // adverb such as "slowly"; empty if absent
};

ActionCues parse_action_cues(std::string_view text);
HierarchicalAnnotation expand_cues(const std::string& global_text, const ActionCues& cues);

// Rule-table expansion; throws ReasonerError on blank input.
HierarchicalAnnotation template_reasoner_stub(const std::string& global_text);

class TemplateReasoner final : public ReasonerClient {
 public:
  HierarchicalAnnotation expand(const std::string& global_text) override {
    return template_reasoner_stub(global_text);
  }
};

}  // namespace kinmo
