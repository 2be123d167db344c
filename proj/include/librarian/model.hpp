#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace librarian {

using Json = nlohmann::json;

/// One original file of a task.
struct SourceUnit {
  std::string id;
  std::string code;
  std::string test_ref;
  std::optional<std::string> description;

  bool operator==(const SourceUnit&) const = default;
};

/// Test-suite descriptor as registered in a task manifest.
///
/// `backend` is "mock" (outcomes read from the manifest file at `path`) or
/// "subprocess" (test files under the directory `path` are run by the shim).
struct TestSuite {
  std::string backend = "mock";
  std::vector<std::string> tests;
  std::filesystem::path path;

  bool operator==(const TestSuite&) const = default;
};

struct Task {
  std::string name;
  std::vector<SourceUnit> units;
  std::map<std::string, TestSuite> test_registry;
  std::map<std::string, std::set<std::string>> tags;

  const SourceUnit* find_unit(const std::string& id) const;

  bool operator==(const Task&) const = default;
};

/// Where a candidate came from.
struct Provenance {
  std::string model;
  double temperature = 0.0;
  std::int64_t sample_index = 0;
  std::string prompt_hash;

  bool operator==(const Provenance&) const = default;
};

/// A proposed refactoring for one cluster: library text plus rewritten units.
/// Immutable; the digest is computed on construction.
class Candidate {
 public:
  /// Throws InvalidCandidate when `rewritten` is empty.
  Candidate(std::string library, std::map<std::string, std::string> rewritten,
            Provenance provenance = {});

  const std::string& digest() const noexcept { return digest_; }
  const std::string& library() const noexcept { return library_; }
  const std::map<std::string, std::string>& rewritten() const noexcept { return rewritten_; }
  const Provenance& provenance() const noexcept { return provenance_; }

  bool operator==(const Candidate&) const = default;

 private:
  std::string digest_;
  std::string library_;
  std::map<std::string, std::string> rewritten_;
  Provenance provenance_;
};

enum class FailureKind { assertion, crash, timeout };

std::string to_string(FailureKind kind);
FailureKind failure_kind_from_string(const std::string& s);

/// tau(rho): which tests of a unit's suite passed.
struct TestOutcome {
  std::string unit_id;
  std::set<std::string> passed;
  std::set<std::string> failed;
  std::map<std::string, FailureKind> errored;

  std::size_t total() const noexcept { return passed.size() + failed.size() + errored.size(); }

  bool operator==(const TestOutcome&) const = default;
};

/// Gated loss value. Infeasible is its own state, never an infinity.
class Loss {
 public:
  static Loss finite(double value) { return Loss(value); }
  static Loss infeasible() { return Loss(); }

  bool is_finite() const noexcept { return value_.has_value(); }
  bool is_infeasible() const noexcept { return !value_.has_value(); }
  /// Precondition: is_finite().
  double value() const { return value_.value(); }

  bool operator==(const Loss&) const = default;

 private:
  Loss() = default;
  explicit Loss(double v) : value_(v) {}
  std::optional<double> value_;
};

struct ScoreCard {
  std::uint64_t tokens = 0;
  double mdl_nats = 0.0;
  std::int64_t cc = 0;
  double mi_neg = 0.0;
  Loss loss = Loss::infeasible();
  /// Empty when every metric was computed; otherwise why the candidate was unscorable.
  std::string note;

  bool operator==(const ScoreCard&) const = default;
};

/// Lists every violated task invariant; empty means the task is well formed.
std::vector<std::string> validate_task(const Task& task);

// JSON mappings. Field names follow the type definitions above.
void to_json(Json& j, const SourceUnit& u);
void from_json(const Json& j, SourceUnit& u);
void to_json(Json& j, const TestSuite& s);
void from_json(const Json& j, TestSuite& s);
void to_json(Json& j, const Task& t);
void from_json(const Json& j, Task& t);
void to_json(Json& j, const Provenance& p);
void from_json(const Json& j, Provenance& p);
void to_json(Json& j, const Candidate& c);
Candidate candidate_from_json(const Json& j);
void to_json(Json& j, const TestOutcome& o);
void from_json(const Json& j, TestOutcome& o);
void to_json(Json& j, const Loss& l);
Loss loss_from_json(const Json& j);
void to_json(Json& j, const ScoreCard& s);
void from_json(const Json& j, ScoreCard& s);

/// Reads `<dir>/task.json` and the unit sources it references.
/// Suite paths are resolved against `dir`. Throws InvalidTask on I/O or schema errors.
Task load_task(const std::filesystem::path& dir);

}  // namespace librarian
