#include "kinmo/annotation.hpp"

#include <cctype>
#include <sstream>

#include "kinmo/error.hpp"

namespace kinmo {
namespace {

void check_text(const std::string& text, const std::string& where) {
  if (text.empty()) throw InvalidAnnotation(where + " is empty");
  if (text.find('\n') != std::string::npos || text.find('\r') != std::string::npos)
    throw InvalidAnnotation(where + " contains a line break");
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

void HierarchicalAnnotation::validate() const {
  if (global_texts.empty()) throw InvalidAnnotation("at least one global text is required");
  for (const auto& t : global_texts) check_text(t, "global text");
  for (auto g : kAllGroups) check_text(joint(g), "joint text " + std::string(to_string(g)));
  for (const auto& p : all_group_pairs()) check_text(interaction(p), "interaction text " + to_string(p));
}

std::string format_annotation(const HierarchicalAnnotation& a) {
  a.validate();
  std::ostringstream out;
  out << "[GLOBAL]\n";
  for (const auto& t : a.global_texts) out << t << '\n';
  for (auto g : kAllGroups) out << "[JOINT:" << to_string(g) << "]\n" << a.joint(g) << '\n';
  for (const auto& p : all_group_pairs()) out << "[INTER:" << to_string(p) << "]\n" << a.interaction(p) << '\n';
  return out.str();
}

HierarchicalAnnotation parse_annotation(std::string_view text) {
  HierarchicalAnnotation a;
  enum class Section { None, Global, Joint, Inter } section = Section::None;
  std::array<bool, kNumGroups> seen_joint{};
  std::array<bool, kNumGroupPairs> seen_inter{};
  std::string* slot = nullptr;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      const std::string head = line.substr(1, line.size() - 2);
      slot = nullptr;
      if (head == "GLOBAL") {
        section = Section::Global;
      } else if (head.rfind("JOINT:", 0) == 0) {
        const auto g = parse_group(head.substr(6));
        if (!g) throw InvalidAnnotation("unknown group in line " + std::to_string(line_no));
        if (seen_joint[index_of(*g)]) throw InvalidAnnotation("duplicate section " + head);
        seen_joint[index_of(*g)] = true;
        section = Section::Joint;
        slot = &a.joint(*g);
      } else if (head.rfind("INTER:", 0) == 0) {
        const std::string body = head.substr(6);
        const auto comma = body.find(',');
        const auto g = comma == std::string::npos ? std::nullopt : parse_group(body.substr(0, comma));
        const auto h = comma == std::string::npos ? std::nullopt : parse_group(body.substr(comma + 1));
        if (!g || !h || *g == *h) throw InvalidAnnotation("bad pair in line " + std::to_string(line_no));
        const GroupPair p = GroupPair::of(*g, *h);
        if (seen_inter[pair_index(p)]) throw InvalidAnnotation("duplicate section " + head);
        seen_inter[pair_index(p)] = true;
        section = Section::Inter;
        slot = &a.interaction(p);
      } else {
        throw InvalidAnnotation("unknown section [" + head + "]");
      }
      continue;
    }
    switch (section) {
      case Section::None:
        throw InvalidAnnotation("text before any section at line " + std::to_string(line_no));
      case Section::Global:
        a.global_texts.push_back(line);
        break;
      case Section::Joint:
      case Section::Inter:
        if (!slot->empty()) throw InvalidAnnotation("more than one text in a section at line " + std::to_string(line_no));
        *slot = line;
        break;
    }
  }
  a.validate();
  return a;
}

std::string swap_left_right_words(std::string_view text) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isalpha(static_cast<unsigned char>(text[i]))) {
      std::size_t j = i;
      while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
      const std::string word(text.substr(i, j - i));
      if (word == "left") out += "right";
      else if (word == "right") out += "left";
      else if (word == "Left") out += "Right";
      else if (word == "Right") out += "Left";
      else out += word;
      i = j;
    } else {
      out += text[i++];
    }
  }
  return out;
}

HierarchicalAnnotation mirror_annotation(const HierarchicalAnnotation& a) {
  HierarchicalAnnotation m;
  for (const auto& t : a.global_texts) m.global_texts.push_back(swap_left_right_words(t));
  for (auto g : kAllGroups) m.joint(mirror(g)) = swap_left_right_words(a.joint(g));
  for (const auto& p : all_group_pairs())
    m.interaction(GroupPair::of(mirror(p.first), mirror(p.second))) =
        swap_left_right_words(a.interaction(p));
  return m;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace kinmo
