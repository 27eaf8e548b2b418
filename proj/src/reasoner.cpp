#include "kinmo/reasoner.hpp"

#include <algorithm>
#include <set>

#include "kinmo/error.hpp"

namespace kinmo {
namespace {

const std::set<std::string> kTempoWords = {"slowly", "steadily", "quickly", "rapidly", "gently", "briskly"};

std::string readable(KinematicGroup g) {
  switch (g) {
    case KinematicGroup::Torso: return "torso";
    case KinematicGroup::Neck: return "neck";
    case KinematicGroup::LeftArm: return "left arm";
    case KinematicGroup::RightArm: return "right arm";
    case KinematicGroup::LeftLeg: return "left leg";
    case KinematicGroup::RightLeg: return "right leg";
  }
  return "body";
}

bool has_any(const std::vector<std::string>& words, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (std::find(words.begin(), words.end(), k) != words.end()) return true;
  return false;
}

std::string with_tempo(std::string text, const std::string& tempo) {
  return tempo.empty() ? text : text + " " + tempo;
}

}  // namespace

ActionCues parse_action_cues(std::string_view text) {
  const auto words = tokenize(text);
  ActionCues cues;
  if (has_any(words, {"wave", "waves", "waving", "waved"})) cues.action = ActionKind::Wave;
  else if (has_any(words, {"walk", "walks", "walking", "walked", "steps"})) cues.action = ActionKind::Walk;
  else if (has_any(words, {"squat", "squats", "squatting", "crouches"})) cues.action = ActionKind::Squat;
  else if (has_any(words, {"turn", "turns", "turning", "rotates"})) cues.action = ActionKind::Turn;
  else if (has_any(words, {"still", "stands", "standing", "idle"})) cues.action = ActionKind::Still;
  // The first side word wins: "waves the left arm toward the right" is a left wave.
  for (const auto& w : words) {
    if (w == "left") { cues.side = Side::Left; break; }
    if (w == "right") { cues.side = Side::Right; break; }
  }
  for (const auto& w : words)
    if (kTempoWords.contains(w)) {
      cues.tempo = w;
      break;
    }
  return cues;
}

HierarchicalAnnotation expand_cues(const std::string& global_text, const ActionCues& cues) {
  using G = KinematicGroup;
  HierarchicalAnnotation a;
  a.global_texts = {global_text};
  const bool right = cues.side == Side::Right;
  const G arm = right ? G::RightArm : G::LeftArm;
  const G leg = right ? G::RightLeg : G::LeftLeg;
  std::set<G> active;
  std::string relation = "moves along with the";
  std::string together = "move together";
  for (auto g : kAllGroups) a.joint(g) = "remains still";

  switch (cues.action) {
    case ActionKind::Wave:
      a.joint(arm) = with_tempo(readable(arm) + " raises and lowers", cues.tempo);
      active = {arm};
      relation = "swings up and down beside the";
      break;
    case ActionKind::Walk:
      a.joint(G::Torso) = with_tempo("moves forward", cues.tempo);
      a.joint(G::Neck) = "moves forward with the torso";
      a.joint(leg) = with_tempo(readable(leg) + " steps forward first", cues.tempo);
      a.joint(leg == G::LeftLeg ? G::RightLeg : G::LeftLeg) = "steps forward second";
      a.joint(G::LeftArm) = "swings back and forth";
      a.joint(G::RightArm) = "swings back and forth";
      active = {G::Torso, G::Neck, G::LeftArm, G::RightArm, G::LeftLeg, G::RightLeg};
      relation = "swings past the";
      together = "alternate forward and back";
      break;
    case ActionKind::Squat:
      a.joint(G::Torso) = with_tempo("lowers and rises", cues.tempo);
      a.joint(G::Neck) = "lowers and rises with the torso";
      a.joint(G::LeftLeg) = "bends and straightens";
      a.joint(G::RightLeg) = "bends and straightens";
      a.joint(arm) = readable(arm) + " reaches forward";
      active = {G::Torso, G::Neck, G::LeftLeg, G::RightLeg, arm};
      relation = "folds toward the";
      together = "bend together";
      break;
    case ActionKind::Turn:
      a.joint(G::Torso) = with_tempo(std::string("rotates to the ") + (right ? "right" : "left"), cues.tempo);
      for (auto g : kAllGroups)
        if (g != G::Torso) a.joint(g) = "turns with the body";
      active = {G::Torso};
      relation = "rotates with the";
      break;
    case ActionKind::Still:
      break;
    case ActionKind::Unknown:
      for (auto g : kAllGroups) a.joint(g) = "moves naturally";
      break;
  }

  for (const auto& p : all_group_pairs()) {
    const bool first = active.contains(p.first);
    const bool second = active.contains(p.second);
    std::string& text = a.interaction(p);
    if (cues.action == ActionKind::Unknown) text = "move naturally together";
    else if (first && second) text = readable(p.first) + " and " + readable(p.second) + " " + together;
    else if (first) text = readable(p.first) + " " + relation + " " + readable(p.second);
    else if (second) text = readable(p.second) + " " + relation + " " + readable(p.first);
    else text = "keep their distance";
  }
  return a;
}

HierarchicalAnnotation template_reasoner_stub(const std::string& global_text) {
  if (tokenize(global_text).empty()) throw ReasonerError("reasoner needs a nonempty caption");
  return expand_cues(global_text, parse_action_cues(global_text));
}

}  // namespace kinmo
