#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace librarian::protocol {

// Completion format: an optional helper section followed by one section per program.
inline constexpr std::string_view kHelperMarker = "# ==== NEW HELPER FUNCTIONS ====";
inline constexpr std::string_view kProgramPrefix = "# ########## PROGRAM: ";
inline constexpr std::string_view kProgramSuffix = " ##########";

// Prompt-only sections.
inline constexpr std::string_view kRetrievedMarker = "# ==== RETRIEVED HELPER FUNCTIONS (import from codebank) ====";
inline constexpr std::string_view kOriginalsMarker = "# ==== ORIGINAL PROGRAMS ====";
inline constexpr std::string_view kEndMarker = "# ==== END OF PROGRAMS ====";
inline constexpr std::string_view kDescriptionPrefix = "#: ";

inline constexpr std::string_view kLibraryModule = "codebank";

std::string program_marker(std::string_view id);

/// Returns the id when `line` is a program marker.
bool parse_program_marker(std::string_view line, std::string& id);

struct PromptProgram {
  std::string id;
  std::string description;
  std::string code;
};

/// Programs listed between the originals and end markers of a refactoring
/// prompt. Empty when the prompt has no such section.
std::vector<PromptProgram> extract_prompt_programs(std::string_view prompt);

}  // namespace librarian::protocol
