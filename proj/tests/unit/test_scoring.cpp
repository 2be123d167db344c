#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fixtures.hpp"
#include "librarian/code/metrics.hpp"
#include "librarian/code/tokenizer.hpp"
#include "librarian/errors.hpp"
#include "librarian/scoring.hpp"

using namespace librarian;
using namespace librarian::scoring;

namespace {

gateway::GatewayConfig scorer(const std::string& profile) {
  gateway::GatewayConfig cfg;
  cfg.scorer_endpoint = "stub:" + profile;
  return cfg;
}

Candidate named(const std::string& variant) {
  return Candidate(fixtures::read("naming/" + variant + "_lib.py"), {{"p", fixtures::read("naming/" + variant + ".py")}});
}

}  // namespace

TEST_CASE("metric ids round trip") {
  for (MetricId m : kAllMetrics) CHECK(metric_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(metric_from_string("bleu"), Error);
  CHECK(conditional_prefix("LIB", "u1") == "LIB\n\n# file: u1\n");
}

TEST_CASE("token metric sums library and programs") {
  Candidate c("def f():\n    return 1\n", {{"a", "print(f())\n"}, {"b", "x = f()\n"}});
  const auto t = [](const char* s) { return code::count_tokens(s); };
  CHECK(score_tokens(c) == t("def f():\n    return 1\n") + t("print(f())\n") + t("x = f()\n"));
  CHECK(score_tokens(c, "fallback") == 7 + 6 + 5);
}

TEST_CASE("uniform scorer charges ln 2 per token of library and programs") {
  gateway::Gateway gw(scorer("uniform"));
  Candidate c("def f():\n    return 1\n", {{"a", "print(f())\n"}, {"b", "x = f()\n"}});
  CHECK(score_mdl(c, gw) == doctest::Approx(static_cast<double>(score_tokens(c)) * std::numbers::ln2));
}

TEST_CASE("identity candidate reproduces the baseline exactly") {
  gateway::Gateway gw(scorer("vocab-aware"));
  const std::string a = fixtures::read("code/dijkstra.py");
  const std::string b = fixtures::read("naming/readable.py");
  Candidate identity("", {{"a", a}, {"b", b}});
  ScoringContext ctx{&gw, "ref-model", ""};
  ScoreCard card = score_candidate(identity, ctx);
  CHECK(card.note.empty());
  // Empty library: the MDL is the sum of per-program conditional costs.
  const double expected = gw.score_suffix(conditional_prefix("", "a"), a).suffix_nats() +
                          gw.score_suffix(conditional_prefix("", "b"), b).suffix_nats();
  CHECK(card.mdl_nats == expected);
  CHECK(card.tokens == code::count_tokens(a) + code::count_tokens(b));
  CHECK(card.cc == code::cyclomatic_complexity(a) + code::cyclomatic_complexity(b));
  CHECK(card.mi_neg == -(code::maintainability_index(a) + code::maintainability_index(b)));
  ScoreCard again = score_candidate(Candidate("", {{"b", b}, {"a", a}}), ctx);
  CHECK(again == card);
}

TEST_CASE("complexity and maintainability sums") {
  CHECK(score_cc(Candidate("def f():\n    return 1\n", {{"a", "print(f())\n"}})) == 2);
  std::string wide = "x = a0";
  for (int i = 1; i < 800; ++i) wide += " or a" + std::to_string(i);
  wide += "\n";
  CHECK(code::maintainability_index(wide) == 0.0);
  CHECK(score_mi(Candidate(wide, {{"a", wide}})) == 0.0);
  CHECK(score_mi(Candidate("", {{"a", "x = 1\n"}})) == doctest::Approx(-code::maintainability_index("x = 1\n")));
}

TEST_CASE("readable names cost more tokens but less description length") {
  gateway::Gateway gw(scorer("vocab-aware"));
  Candidate readable = named("readable");
  Candidate obfuscated = named("obfuscated");
  const auto tr = score_tokens(readable), to = score_tokens(obfuscated);
  const double mr = score_mdl(readable, gw), mo = score_mdl(obfuscated, gw);
  CAPTURE(tr);
  CAPTURE(to);
  CAPTURE(mr);
  CAPTURE(mo);
  CHECK(to < tr);
  CHECK(mo > mr);
  // Same control flow either way.
  CHECK(score_cc(readable) == score_cc(obfuscated));
}

TEST_CASE("unscorable candidates") {
  gateway::Gateway gw(scorer("uniform"));
  ScoreCard bad = score_candidate(Candidate("def (:\n", {{"a", "x\n"}}), ScoringContext{&gw});
  CHECK(bad.note.find("parse error") != std::string::npos);
  CHECK(bad.loss.is_infeasible());
  auto small = scorer("uniform");
  small.context_tokens = 5;
  gateway::Gateway tiny(small);
  ScoreCard over = score_candidate(Candidate("", {{"a", "print(1, 2, 3, 4, 5)\n"}}), ScoringContext{&tiny});
  CHECK(over.note.find("unscorable") != std::string::npos);

  Baseline base;
  base.outcomes["a"] = TestOutcome{"a", {}, {}, {}};
  CHECK(gated_loss(Candidate("", {{"a", "x\n"}}), over, base, {{"a", TestOutcome{"a", {"t"}, {}, {}}}}, MetricId::mdl)
            .is_infeasible());
}

TEST_CASE("gated loss follows the subset condition") {
  Candidate c("", {{"a", "x = 1\n"}, {"b", "y = 2\n"}});
  ScoreCard card;
  card.tokens = 42;
  Baseline base;
  base.outcomes["a"] = TestOutcome{"a", {"t1", "t2"}, {"t3"}, {}};
  base.outcomes["b"] = TestOutcome{"b", {}, {"t1"}, {}};
  std::map<std::string, TestOutcome> superset{{"a", TestOutcome{"a", {"t1", "t2", "t3"}, {}, {}}},
                                              {"b", TestOutcome{"b", {}, {"t1"}, {}}}};
  CHECK(gated_loss(c, card, base, superset, MetricId::tokens) == Loss::finite(42));
  auto lost = superset;
  lost["a"] = TestOutcome{"a", {"t1", "t3"}, {"t2"}, {}};
  CHECK(gated_loss(c, card, base, lost, MetricId::tokens).is_infeasible());
  auto missing = superset;
  missing.erase("b");
  CHECK_THROWS_AS(gated_loss(c, card, base, missing, MetricId::tokens), UnitMismatch);
}

TEST_CASE("select_best") {
  std::vector<Candidate> cands;
  for (int i = 0; i < 4; ++i) cands.emplace_back("", std::map<std::string, std::string>{{"u", "x = " + std::to_string(i) + "\n"}});
  using Scored = std::vector<std::pair<const Candidate*, Loss>>;

  Scored s{{&cands[0], Loss::finite(5)}, {&cands[1], Loss::finite(3)}, {&cands[2], Loss::finite(7)}};
  auto sel = select_best(s);
  CHECK_FALSE(sel.keep_originals);
  CHECK(sel.index == 1);

  CHECK(select_best(Scored{{&cands[0], Loss::infeasible()}, {&cands[1], Loss::infeasible()}}).keep_originals);
  CHECK(select_best(Scored{}).keep_originals);

  Scored tie{{&cands[0], Loss::finite(2)}, {&cands[1], Loss::finite(2)}, {&cands[2], Loss::finite(2)}};
  const Candidate* winner = tie[select_best(tie).index].first;
  for (const auto& [c, l] : tie) CHECK(winner->digest() <= c->digest());
  std::reverse(tie.begin(), tie.end());
  CHECK(tie[select_best(tie).index].first == winner);
}

TEST_CASE("selection is invariant under positive rescaling of losses") {
  std::mt19937_64 rng(3);
  std::vector<Candidate> cands;
  for (int i = 0; i < 12; ++i) cands.emplace_back("", std::map<std::string, std::string>{{"u", std::to_string(i)}});
  for (int round = 0; round < 200; ++round) {
    std::vector<std::pair<const Candidate*, Loss>> a, b;
    const double scale = 0.01 + static_cast<double>(rng() % 1000);
    for (const auto& c : cands) {
      const auto r = rng() % 10;
      Loss l = r == 0 ? Loss::infeasible() : Loss::finite(static_cast<double>(r));
      a.emplace_back(&c, l);
      b.emplace_back(&c, l.is_finite() ? Loss::finite(l.value() * scale) : l);
    }
    auto sa = select_best(a), sb = select_best(b);
    CHECK(sa.keep_originals == sb.keep_originals);
    if (!sa.keep_originals) CHECK(a[sa.index].first->digest() == b[sb.index].first->digest());
  }
}
