#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "librarian/clustering.hpp"
#include "librarian/gateway.hpp"
#include "librarian/harness.hpp"
#include "librarian/model.hpp"
#include "librarian/scoring.hpp"

namespace librarian::pipeline {

enum class Mode { parallel, incremental };

std::string to_string(Mode m);
/// Throws Error on an unknown name.
Mode mode_from_string(std::string_view s);

struct RunConfig {
  std::int64_t K = 8;
  std::size_t S = 3;
  scoring::MetricId metric = scoring::MetricId::mdl;
  Mode mode = Mode::parallel;
  std::size_t retrieval_top_m = 5;
  std::uint64_t seed = 0;
  /// Worker threads for samples and clusters.
  std::size_t jobs = 1;
  /// Units below this many source lines are left out of clustering and pass through.
  std::size_t min_sloc = 10;
  /// Keep only the first clusters covering this many units; 0 keeps all.
  std::size_t max_units = 0;
  std::string tokenizer = "ref-model";
  gateway::GatewayConfig gateway;
  harness::RunnerLimits limits;
  std::vector<std::string> shim_command;

  bool operator==(const RunConfig&) const = default;
};

void to_json(Json& j, const RunConfig& c);
void from_json(const Json& j, RunConfig& c);
/// Throws Error when K < 1 or S < 1.
void validate(const RunConfig& c);

struct LibraryEntry {
  std::string name;
  std::string source;
  std::size_t origin_cluster = 0;

  bool operator==(const LibraryEntry&) const = default;
};

void to_json(Json& j, const LibraryEntry& e);
void from_json(const Json& j, LibraryEntry& e);

/// Library text split into top-level definitions and everything else.
struct SplitLibrary {
  std::vector<std::string> preamble;
  std::vector<LibraryEntry> entries;
};

/// Throws ParseError.
SplitLibrary split_library(const std::string& text, std::size_t origin_cluster = 0);

/// Renames identifier tokens `from` to `to`, including `codebank.<from>`
/// but not other attribute accesses. Throws ParseError.
std::string rename_identifier(const std::string& source, const std::string& from, const std::string& to);

/// Accumulated library: append-only definitions plus deduplicated preamble chunks.
class LibraryState {
 public:
  const std::vector<LibraryEntry>& entries() const noexcept { return entries_; }
  const std::vector<std::string>& preamble() const noexcept { return preamble_; }
  std::size_t revision() const noexcept { return revision_; }
  std::size_t collisions() const noexcept { return collisions_; }
  const LibraryEntry* find(const std::string& name) const;

  /// Source of the whole library; empty when nothing has been added.
  std::string text() const;
  /// Source of the preamble chunks and entries added after the given counts.
  std::string text_from(std::size_t preamble_offset, std::size_t entry_offset) const;

  /// Appends one cluster's helpers and bumps the revision. A name already
  /// present with identical source is reused; a different definition is
  /// renamed `<name>_vN` together with its references in `delta` and
  /// `rewritten`. Returns the renames. Throws ParseError.
  std::map<std::string, std::string> merge(const std::string& delta, std::size_t cluster,
                                           std::map<std::string, std::string>& rewritten);

  bool operator==(const LibraryState&) const = default;

  friend void to_json(Json& j, const LibraryState& s);
  friend void from_json(const Json& j, LibraryState& s);

 private:
  std::vector<std::string> preamble_;
  std::vector<LibraryEntry> entries_;
  std::size_t revision_ = 0;
  std::size_t collisions_ = 0;
};

/// Refactoring prompt for one cluster. Retrieved entries get their own
/// section, omitted when there are none.
std::string build_prompt(const std::vector<const SourceUnit*>& cluster, const std::vector<LibraryEntry>& retrieved);

/// Splits a completion into helpers and one program per cluster unit.
/// Throws ProtocolError (missing/unknown/duplicate sections, stray text before
/// the helper marker, duplicate helper names) and ParseError.
Candidate parse_candidate(const std::string& completion, const std::vector<std::string>& cluster_ids,
                          Provenance provenance = {});

/// Top-m entries by highest cosine similarity between the entry source and any
/// unit description; ties by name.
std::vector<LibraryEntry> retrieve_relevant(const LibraryState& library, const std::vector<const SourceUnit*>& cluster,
                                            std::size_t m, gateway::Gateway& gw);

struct SampleRecord {
  std::int64_t index = 0;
  std::string completion;
  std::optional<Candidate> candidate;
  /// "protocol", "parse", "retrieved-redefinition" or "workspace"; empty when the sample was scored.
  std::string error_kind;
  std::string error;
  std::map<std::string, TestOutcome> outcomes;
  ScoreCard card;
};

struct ClusterResult {
  std::size_t index = 0;
  std::vector<std::string> unit_ids;
  std::vector<std::string> retrieved;
  std::string prompt;
  std::vector<SampleRecord> samples;
  scoring::Baseline baseline;
  bool keep_originals = true;
  std::size_t selected = 0;  // valid when !keep_originals
  /// New helpers of the selection (empty on KeepOriginals).
  std::string delta_library;
  std::map<std::string, std::string> rewritten;
  std::size_t protocol_errors = 0;
  std::size_t parse_errors = 0;
};

struct Services {
  gateway::Gateway& gateway;
  const harness::Harness& harness;
};

/// Sample K completions, test, score, gate and select for one cluster.
/// `library` is the runtime library the rewritten programs import next to the
/// new helpers; `retrieved` are the entries shown in the prompt.
ClusterResult refactor_cluster(const Task& task, const std::vector<std::string>& cluster, std::size_t index,
                               const LibraryState& library, const std::vector<LibraryEntry>& retrieved,
                               const RunConfig& cfg, Services services);

struct RunResult {
  clustering::ClusterPlan plan;
  std::vector<ClusterResult> clusters;
  /// Library revisions: history[t] is the state after t clusters (history[0] is the seed).
  std::vector<LibraryState> history;
  LibraryState library;
  std::map<std::string, std::string> rewritten;
  std::map<std::string, std::string> descriptions;
  std::map<std::string, TestOutcome> original_outcomes;
  std::map<std::string, TestOutcome> final_outcomes;
  ScoreCard baseline_card;
  ScoreCard final_card;
};

/// Description of every unit; units without one are summarized.
std::map<std::string, std::string> describe_units(const Task& task, gateway::Gateway& gw);

/// Clusters the eligible units by their description embeddings.
clustering::ClusterPlan plan_clusters(const Task& task, const std::map<std::string, std::string>& descriptions,
                                      const RunConfig& cfg, gateway::Gateway& gw);

/// Runs every cluster of `plan` in the configured mode.
RunResult run(const Task& task, const clustering::ClusterPlan& plan, const std::map<std::string, std::string>& descriptions,
              const RunConfig& cfg, Services services, const LibraryState& seed_library = {});

RunResult run_parallel(const Task& task, const RunConfig& cfg, Services services, const LibraryState& seed_library = {});
RunResult run_incremental(const Task& task, const RunConfig& cfg, Services services,
                          const LibraryState& seed_library = {});

/// Writes run.json, clusters/, library/, rewritten/ and final.json.
void write_run(const std::filesystem::path& dir, const Task& task, const RunConfig& cfg, const RunResult& result);

/// Reads library/state.json of a finished run. Throws IncompleteRun.
LibraryState load_library(const std::filesystem::path& run_dir);

}  // namespace librarian::pipeline
