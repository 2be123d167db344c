#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "librarian/gateway.hpp"
#include "librarian/model.hpp"

namespace librarian::scoring {

enum class MetricId { tokens, mdl, cc, mi };

std::string to_string(MetricId m);
/// Throws Error on an unknown name.
MetricId metric_from_string(std::string_view s);
inline constexpr MetricId kAllMetrics[] = {MetricId::tokens, MetricId::mdl, MetricId::cc, MetricId::mi};

/// Conditioning prefix for one program: library + "\n\n# file: <id>\n".
std::string conditional_prefix(std::string_view library, std::string_view unit_id);

struct ScoringContext {
  gateway::Gateway* gateway = nullptr;
  std::string tokenizer = "ref-model";
  /// Library text the programs may use without paying for it (retrieved entries).
  std::string inherited_library;
};

std::uint64_t score_tokens(const Candidate& c, const std::string& tokenizer = "ref-model");
/// -log p(L) + sum_n -log p(rho'_n | inherited + L). Throws ContextOverflow.
double score_mdl(const Candidate& c, gateway::Gateway& gw, std::string_view inherited_library = {});
/// Throws ParseError.
std::int64_t score_cc(const Candidate& c);
/// Negated MI sum; an empty library contributes nothing. Throws ParseError.
double score_mi(const Candidate& c);

/// All four metrics. Parse errors and context overflow leave the card
/// unscorable: `note` says why and the loss is infeasible.
ScoreCard score_candidate(const Candidate& c, const ScoringContext& ctx);

double metric_value(const ScoreCard& card, MetricId m);

/// Original outcomes plus metric values of the originals under an empty library.
struct Baseline {
  std::map<std::string, TestOutcome> outcomes;
  ScoreCard card;
};

/// Finite(M) iff every original passing set is contained in the candidate's;
/// unscorable cards are infeasible. Throws UnitMismatch when an outcome is missing.
Loss gated_loss(const Candidate& c, const ScoreCard& card, const Baseline& baseline,
                const std::map<std::string, TestOutcome>& outcomes, MetricId metric);

struct Selection {
  bool keep_originals = true;
  std::size_t index = 0;  // valid when !keep_originals
};

/// Minimal finite loss, ties to the smallest digest; KeepOriginals when none is finite.
Selection select_best(const std::vector<std::pair<const Candidate*, Loss>>& scored);

}  // namespace librarian::scoring
