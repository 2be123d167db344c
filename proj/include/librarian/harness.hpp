#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include "librarian/model.hpp"

namespace librarian::harness {

struct RunnerLimits {
  double per_test_timeout_s = 10.0;
  /// Wall-clock bound for one shim invocation; 0 derives it from the test count.
  double suite_timeout_s = 0.0;
  std::uint64_t cpu_seconds = 0;    // 0 = unlimited
  std::uint64_t memory_bytes = 0;   // 0 = unlimited

  bool operator==(const RunnerLimits&) const = default;
};

struct HarnessConfig {
  RunnerLimits limits;
  /// Shim command; the workspace path, `--timeout` and the per-test timeout are appended.
  std::vector<std::string> shim_command;
  std::filesystem::path work_root = std::filesystem::temp_directory_path();
  std::size_t max_processes = 4;
  bool keep_workspaces = false;
};

/// Shared outcome.json schema file.
std::filesystem::path outcome_schema_path();

/// Parses and validates one outcome.json document. Throws BackendProtocolError.
TestOutcome parse_outcome_document(const Json& doc, const std::string& unit_id);

/// tau(original) is a subset of tau(candidate). Throws UnitMismatch.
bool pass_gate(const TestOutcome& original, const TestOutcome& candidate);

/// Runs a unit's suite against (library, code). Thread-safe.
class Harness {
 public:
  Harness(const Task& task, HarnessConfig cfg);
  ~Harness();

  /// Throws WorkspaceError, BackendProtocolError, InvalidTask (unknown unit or suite).
  TestOutcome run_suite(const std::string& unit_id, const std::string& code, const std::string& library) const;

 private:
  TestOutcome run_mock(const SourceUnit& unit, const TestSuite& suite, const std::string& code,
                       const std::string& library) const;
  TestOutcome run_subprocess(const SourceUnit& unit, const TestSuite& suite, const std::string& code,
                             const std::string& library) const;

  const Task& task_;
  HarnessConfig cfg_;
  std::unique_ptr<std::counting_semaphore<256>> slots_;
};

}  // namespace librarian::harness
