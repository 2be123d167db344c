#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fixtures {

inline std::filesystem::path path(const std::string& rel) { return std::filesystem::path(LIBRARIAN_FIXTURES) / rel; }

inline std::string read(const std::string& rel) {
  std::ifstream in(path(rel), std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json json(const std::string& rel) { return nlohmann::json::parse(read(rel)); }

}  // namespace fixtures
