#include "librarian/protocol.hpp"

namespace librarian::protocol {

std::string program_marker(std::string_view id) {
  std::string s(kProgramPrefix);
  s += id;
  s += kProgramSuffix;
  return s;
}

bool parse_program_marker(std::string_view line, std::string& id) {
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
  if (!line.starts_with(kProgramPrefix) || !line.ends_with(kProgramSuffix)) return false;
  if (line.size() <= kProgramPrefix.size() + kProgramSuffix.size()) return false;
  id = std::string(line.substr(kProgramPrefix.size(), line.size() - kProgramPrefix.size() - kProgramSuffix.size()));
  return true;
}

std::vector<PromptProgram> extract_prompt_programs(std::string_view prompt) {
  std::vector<PromptProgram> out;
  auto start = prompt.find(std::string(kOriginalsMarker) + "\n");
  if (start == std::string_view::npos) return out;
  std::size_t pos = start + kOriginalsMarker.size() + 1;
  PromptProgram* cur = nullptr;
  bool in_description = false;
  while (pos < prompt.size()) {
    std::size_t eol = prompt.find('\n', pos);
    std::string_view line = prompt.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    std::size_t next = eol == std::string_view::npos ? prompt.size() : eol + 1;
    if (line == kEndMarker) break;
    std::string id;
    if (parse_program_marker(line, id)) {
      out.push_back({id, {}, {}});
      cur = &out.back();
      in_description = true;
    } else if (cur) {
      if (in_description && line.starts_with(kDescriptionPrefix)) {
        if (!cur->description.empty()) cur->description += '\n';
        cur->description += line.substr(kDescriptionPrefix.size());
      } else {
        in_description = false;
        cur->code += prompt.substr(pos, next - pos);
      }
    }
    pos = next;
  }
  // Each program is followed by one separating blank line.
  for (auto& p : out) {
    if (p.code.ends_with("\n\n")) p.code.pop_back();
  }
  return out;
}

}  // namespace librarian::protocol
