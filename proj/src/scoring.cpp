#include "librarian/scoring.hpp"

#include "librarian/code/metrics.hpp"
#include "librarian/code/tokenizer.hpp"
#include "librarian/errors.hpp"
#include "librarian/harness.hpp"

namespace librarian::scoring {

std::string to_string(MetricId m) {
  switch (m) {
    case MetricId::tokens: return "tokens";
    case MetricId::mdl: return "mdl";
    case MetricId::cc: return "cc";
    case MetricId::mi: return "mi";
  }
  return "mdl";
}

MetricId metric_from_string(std::string_view s) {
  for (MetricId m : kAllMetrics) {
    if (to_string(m) == s) return m;
  }
  throw Error("unknown metric '" + std::string(s) + "' (expected tokens, mdl, cc or mi)");
}

std::string conditional_prefix(std::string_view library, std::string_view unit_id) {
  std::string p(library);
  p += "\n\n# file: ";
  p += unit_id;
  p += "\n";
  return p;
}

std::uint64_t score_tokens(const Candidate& c, const std::string& tokenizer) {
  auto tok = code::TokenizerRegistry::global().get(tokenizer);
  std::uint64_t total = tok->count(c.library());
  for (const auto& [id, src] : c.rewritten()) total += tok->count(src);
  return total;
}

double score_mdl(const Candidate& c, gateway::Gateway& gw, std::string_view inherited_library) {
  double nats = 0.0;
  if (!c.library().empty()) nats += gw.score_suffix(std::string(inherited_library), c.library()).suffix_nats();
  std::string context(inherited_library);
  context += c.library();
  for (const auto& [id, src] : c.rewritten()) nats += gw.score_suffix(conditional_prefix(context, id), src).suffix_nats();
  return nats;
}

std::int64_t score_cc(const Candidate& c) {
  std::int64_t total = code::cyclomatic_complexity(c.library());
  for (const auto& [id, src] : c.rewritten()) total += code::cyclomatic_complexity(src);
  return total;
}

double score_mi(const Candidate& c) {
  double total = 0.0;
  if (!c.library().empty()) total -= code::maintainability_index(c.library());
  for (const auto& [id, src] : c.rewritten()) total -= code::maintainability_index(src);
  return total;
}

ScoreCard score_candidate(const Candidate& c, const ScoringContext& ctx) {
  ScoreCard card;
  try {
    card.cc = score_cc(c);
    card.mi_neg = score_mi(c);
    card.tokens = score_tokens(c, ctx.tokenizer);
    if (ctx.gateway == nullptr) throw Error("scoring requires a gateway");
    card.mdl_nats = score_mdl(c, *ctx.gateway, ctx.inherited_library);
  } catch (const ParseError& e) {
    card.note = std::string("unscorable: parse error: ") + e.what();
  } catch (const ContextOverflow& e) {
    card.note = std::string("unscorable: ") + e.what();
  }
  card.loss = Loss::infeasible();
  return card;
}

double metric_value(const ScoreCard& card, MetricId m) {
  switch (m) {
    case MetricId::tokens: return static_cast<double>(card.tokens);
    case MetricId::mdl: return card.mdl_nats;
    case MetricId::cc: return static_cast<double>(card.cc);
    case MetricId::mi: return card.mi_neg;
  }
  return card.mdl_nats;
}

Loss gated_loss(const Candidate& c, const ScoreCard& card, const Baseline& baseline,
                const std::map<std::string, TestOutcome>& outcomes, MetricId metric) {
  bool feasible = card.note.empty();
  for (const auto& [id, src] : c.rewritten()) {
    auto orig = baseline.outcomes.find(id);
    auto got = outcomes.find(id);
    if (orig == baseline.outcomes.end() || got == outcomes.end()) {
      throw UnitMismatch("no test outcome for unit '" + id + "'");
    }
    if (!harness::pass_gate(orig->second, got->second)) feasible = false;
  }
  return feasible ? Loss::finite(metric_value(card, metric)) : Loss::infeasible();
}

Selection select_best(const std::vector<std::pair<const Candidate*, Loss>>& scored) {
  Selection best;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    const auto& [cand, loss] = scored[i];
    if (!loss.is_finite()) continue;
    if (best.keep_originals) {
      best = {false, i};
      continue;
    }
    const auto& [bc, bl] = scored[best.index];
    if (loss.value() < bl.value() || (loss.value() == bl.value() && cand->digest() < bc->digest())) best.index = i;
  }
  return best;
}

}  // namespace librarian::scoring
