#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "librarian/model.hpp"
#include "librarian/scoring.hpp"

namespace librarian::analysis {

struct SamplePoint {
  double score = 0.0;
  double value = 0.0;
  bool feasible = true;
  /// Final tie-break after score and value.
  std::string key;
};

/// Unbiased estimate of E[value of the min-score point among k draws without
/// replacement], over feasible points. Throws InsufficientSamples when k is 0
/// or exceeds the number of feasible points.
double best_at_k(std::vector<SamplePoint> samples, std::size_t k);

/// Weights w_i (i = 1..n) of the sorted values: C(n-i, k-1) / C(n, k).
std::vector<double> best_at_k_weights(std::size_t n, std::size_t k);

struct Comparison {
  std::string winner;
  std::string loser;
};

/// One rater's preference on one item pair.
struct Judgement {
  std::string instance;
  std::string a;
  std::string b;
  std::string winner;
};

/// Collapses the judgements of each instance into one comparison when the
/// majority share reaches `threshold`; instances below it are dropped.
std::vector<Comparison> consensus_filter(const std::vector<Judgement>& judgements, double threshold = 0.75);

struct BradleyTerryFit {
  std::vector<std::string> items;
  std::map<std::string, double> strength;
  std::string reference;
  std::size_t iterations = 0;
  bool converged = false;
  /// Log-likelihood before the first and after every update.
  std::vector<double> log_likelihood;
  /// Covariance of log-strengths (reference row/column zero), in `items` order.
  std::vector<std::vector<double>> covariance;
  /// Pairwise comparison counts wins[i][j] = times items[i] beat items[j].
  std::vector<std::vector<double>> wins;
};

/// Minorization-maximization fit. The reference item (default: first id in
/// sorted order) is pinned to 1. Throws DisconnectedGraph, Error on empty input
/// or an unknown reference.
BradleyTerryFit bradley_terry_fit(const std::vector<Comparison>& comparisons, const std::string& reference = {},
                                  double tolerance = 1e-10, std::size_t max_iterations = 10000);

double bt_log_likelihood(const std::vector<std::vector<double>>& wins, const std::vector<double>& strength);

struct WinProbability {
  double p = 0.5;
  double lower = 0.0;
  double upper = 1.0;
};

/// P(a beats b) with a Wald interval on the log-odds scale.
WinProbability win_probability(const BradleyTerryFit& fit, const std::string& a, const std::string& b, double z = 1.959963984540054);

/// Table row names used verbatim as report keys.
inline constexpr const char* kPassRate = "Pass Rate";
inline constexpr const char* kPassRateImprovement = "Pass Rate Improvement";
inline constexpr const char* kMdlRatio = "MDL Ratio";
inline constexpr const char* kTokenRatio = "Token Ratio";
inline constexpr const char* kLibraryFunctions = "Library Functions";
inline constexpr const char* kAvgCalls = "Avg Calls per Function";
inline constexpr const char* kSingleUse = "% Single Use Functions";

struct ScalingRow {
  std::string metric;
  std::size_t k = 0;
  double theta = 0.0;
  std::size_t clusters = 0;
};

struct CoherenceRow {
  std::size_t cluster = 0;
  std::size_t size = 0;
  double entropy = 0.0;
  double hhi = 0.0;
};

struct MetricReport {
  std::string task;
  /// Percentages of registered tests passed.
  double pass_rate = 0.0;
  double pass_rate_improvement = 0.0;
  double mdl_ratio = 1.0;
  double token_ratio = 1.0;
  double cc_ratio = 1.0;
  std::int64_t library_functions = 0;
  double avg_calls = 0.0;
  /// Percentage of library definitions with exactly one call site.
  double single_use = 0.0;
  std::int64_t unused_functions = 0;
  std::size_t name_collisions = 0;
  std::vector<Json> clusters;
  std::vector<ScalingRow> scaling;
  std::vector<CoherenceRow> coherence;
};

Json to_json(const MetricReport& r);

/// Aggregates a finished run directory. Throws IncompleteRun.
MetricReport build_report(const std::filesystem::path& run_dir);

/// Best@k per reranking metric, averaged over clusters with feasible samples;
/// k runs up to the smallest feasible sample count among them.
std::vector<ScalingRow> scaling_curves(const std::vector<std::vector<std::pair<std::string, ScoreCard>>>& cluster_cards,
                                       const std::vector<ScoreCard>& baselines);

std::string scaling_csv(const std::vector<ScalingRow>& rows);
std::string coherence_csv(const std::vector<CoherenceRow>& rows);

/// Writes report.json, scaling.csv and coherence.csv into the run directory.
MetricReport write_report(const std::filesystem::path& run_dir);

}  // namespace librarian::analysis
