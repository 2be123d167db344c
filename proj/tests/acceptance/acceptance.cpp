// One line per acceptance criterion; exits non-zero when any fails.
#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "librarian/analysis.hpp"
#include "librarian/clustering.hpp"
#include "librarian/code/ast.hpp"
#include "librarian/code/metrics.hpp"
#include "librarian/harness.hpp"
#include "librarian/pipeline.hpp"
#include "librarian/scoring.hpp"
#include "unit/fixture_task.hpp"

using namespace librarian;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double x) {
  std::ostringstream ss;
  ss.precision(6);
  ss << x;
  return ss.str();
}

Verdict gate_soundness() {
  const auto t0 = Clock::now();
  Verdict v;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto draw = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(1, n)(rng); };
  int chosen = 0;
  for (int trial = 0; trial < 1000 && v.ok; ++trial) {
    const std::size_t units = draw(4), tests = draw(5), k = draw(8);
    scoring::Baseline base;
    std::map<std::string, std::string> programs;
    for (std::size_t i = 0; i < units; ++i) {
      const std::string id = "u" + std::to_string(i);
      programs[id] = "x = 0\n";
      TestOutcome o{id, {}, {}, {}};
      for (std::size_t t = 0; t < tests; ++t) (u(rng) < 0.6 ? o.passed : o.failed).insert("t" + std::to_string(t));
      base.outcomes[id] = o;
    }
    std::vector<Candidate> cands;
    std::vector<std::map<std::string, TestOutcome>> outs;
    std::vector<Loss> losses;
    for (std::size_t c = 0; c < k; ++c) {
      auto rewritten = programs;
      rewritten.begin()->second = "x = " + std::to_string(c) + "\n";
      cands.emplace_back("", rewritten);
      std::map<std::string, TestOutcome> out;
      for (const auto& [id, o] : base.outcomes) {
        TestOutcome r{id, {}, {}, {}};
        for (std::size_t t = 0; t < tests; ++t) {
          const std::string name = "t" + std::to_string(t);
          const bool was = o.passed.contains(name);
          const bool now = was ? u(rng) < 0.85 : u(rng) < 0.3;
          if (now) r.passed.insert(name);
          else if (u(rng) < 0.5) r.failed.insert(name);
          else r.errored[name] = FailureKind::crash;
        }
        out[id] = r;
      }
      ScoreCard card;
      card.mdl_nats = u(rng) * 100.0;
      card.loss = Loss::finite(card.mdl_nats);
      losses.push_back(scoring::gated_loss(cands.back(), card, base, out, scoring::MetricId::mdl));
      outs.push_back(std::move(out));
    }
    std::vector<std::pair<const Candidate*, Loss>> scored;
    for (std::size_t c = 0; c < k; ++c) scored.emplace_back(&cands[c], losses[c]);
    const auto sel = scoring::select_best(scored);
    const bool any_feasible = std::any_of(losses.begin(), losses.end(), [](const Loss& l) { return l.is_finite(); });
    v.require(sel.keep_originals != any_feasible, "trial " + std::to_string(trial) + ": wrong fallback");
    if (sel.keep_originals) continue;
    ++chosen;
    for (const auto& [id, o] : base.outcomes) {
      v.require(harness::pass_gate(o, outs[sel.index].at(id)), "trial " + std::to_string(trial) + ": selected a regression");
    }
  }
  const double secs = seconds_since(t0);
  v.require(secs < 5.0, "took " + fmt(secs) + " s");
  if (v.ok) v.detail = "1000 trials, " + std::to_string(chosen) + " selections, " + fmt(secs) + " s";
  return v;
}

double brute_best_at_k(const std::vector<analysis::SamplePoint>& pts, std::size_t k) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::uint32_t mask = 0; mask < (1u << pts.size()); ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) != k) continue;
    const analysis::SamplePoint* best = nullptr;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (!(mask >> i & 1u)) continue;
      const auto& p = pts[i];
      if (!best || std::tie(p.score, p.value, p.key) < std::tie(best->score, best->value, best->key)) best = &p;
    }
    sum += best->value;
    ++count;
  }
  return sum / static_cast<double>(count);
}

Verdict best_at_k_unbiased() {
  const auto t0 = Clock::now();
  Verdict v;
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, 4);
  double worst = 0.0;
  for (std::size_t n = 1; n <= 8; ++n) {
    for (int pop = 0; pop < 200; ++pop) {
      std::vector<analysis::SamplePoint> pts(n);
      for (std::size_t i = 0; i < n; ++i) pts[i] = {static_cast<double>(coarse(rng)), g(rng), true, std::to_string(i)};
      for (std::size_t k = 1; k <= n; ++k) {
        const double a = analysis::best_at_k(pts, k), b = brute_best_at_k(pts, k);
        worst = std::max(worst, std::abs(a - b));
      }
    }
  }
  const double secs = seconds_since(t0);
  v.require(worst <= 1e-12, "max deviation " + fmt(worst));
  v.require(secs < 10.0, "took " + fmt(secs) + " s");
  if (v.ok) v.detail = "n<=8, 200 populations each, max deviation " + fmt(worst) + ", " + fmt(secs) + " s";
  return v;
}

Verdict best_at_k_monotone() {
  Verdict v;
  std::mt19937_64 rng(3);
  std::lognormal_distribution<double> g(0.0, 1.0);
  for (int pop = 0; pop < 100 && v.ok; ++pop) {
    std::vector<analysis::SamplePoint> pts(50);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double s = g(rng);
      pts[i] = {s, s, true, std::to_string(i)};
    }
    double prev = analysis::best_at_k(pts, 1);
    for (std::size_t k = 2; k <= 50; ++k) {
      const double cur = analysis::best_at_k(pts, k);
      v.require(cur <= prev + 1e-12, "population " + std::to_string(pop) + " rises at k=" + std::to_string(k));
      prev = cur;
    }
  }
  if (v.ok) v.detail = "100 populations of 50, non-increasing for k=1..50";
  return v;
}

Verdict cc_matches_cfg() {
  Verdict v;
  const auto expected = fixtures::json("code/cc_cases.expected.json");
  const auto summary = code::parse(fixtures::read("code/cc_cases.py"));
  const auto& fns = expected.at("functions");
  v.require(fns.size() >= 20, "only " + std::to_string(fns.size()) + " oracle functions");
  v.require(summary.functions.size() == fns.size(), "function count differs");
  for (std::size_t i = 0; v.ok && i < fns.size(); ++i) {
    const auto& f = summary.functions[i];
    v.require(f.name == fns[i].at("name") && 1 + f.decision_points == fns[i].at("cc").get<std::int64_t>(),
              "mismatch at " + fns[i].at("name").get<std::string>());
  }
  const auto& cfg = expected.at("cfg");
  const std::int64_t enp = cfg.at("E").get<std::int64_t>() - cfg.at("N").get<std::int64_t>() + 2 * cfg.at("P").get<std::int64_t>();
  v.require(code::cyclomatic_complexity(summary) == enp, "module total differs from E-N+2P");
  if (v.ok) v.detail = std::to_string(fns.size()) + " functions, total " + std::to_string(enp) + " = E-N+2P";
  return v;
}

Verdict tokens_vs_mdl() {
  Verdict v;
  gateway::GatewayConfig cfg;
  cfg.scorer_endpoint = "stub:vocab-aware";
  gateway::Gateway gw(cfg);
  auto load = [](const std::string& variant) {
    return Candidate(fixtures::read("naming/" + variant + "_lib.py"), {{"p", fixtures::read("naming/" + variant + ".py")}});
  };
  const Candidate readable = load("readable"), obfuscated = load("obfuscated");
  const auto tr = scoring::score_tokens(readable), to = scoring::score_tokens(obfuscated);
  const double mr = scoring::score_mdl(readable, gw), mo = scoring::score_mdl(obfuscated, gw);
  v.require(to < tr, "tokens did not decrease");
  v.require(mo > mr, "MDL did not increase");
  v.detail = "tokens " + std::to_string(tr) + " -> " + std::to_string(to) + ", MDL " + fmt(mr) + " -> " + fmt(mo);
  return v;
}

Verdict coherence() {
  Verdict v;
  using clustering::hhi;
  using clustering::make_tag_profile;
  using clustering::tag_entropy;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> ntags(0, 5), which(0, 9), size(1, 6);
  for (int trial = 0; trial < 10000 && v.ok; ++trial) {
    std::map<std::string, std::set<std::string>> tags;
    std::vector<std::string> cluster;
    for (int i = size(rng); i > 0; --i) {
      const std::string id = "p" + std::to_string(i);
      cluster.push_back(id);
      for (int k = ntags(rng); k > 0; --k) tags[id].insert("t" + std::to_string(which(rng)));
    }
    const double h = tag_entropy(make_tag_profile({cluster}, tags), 0);
    v.require(h >= 0.0 && h <= 1.0, "entropy " + fmt(h) + " out of range");
  }
  {
    const std::map<std::string, std::set<std::string>> tags{{"a", {"x"}}, {"b", {"x"}}, {"c", {"w"}}, {"d", {"y"}},
                                                            {"e", {"z"}}, {"f", {"v"}}};
    const auto prof = make_tag_profile({{"a", "b"}, {"c", "d", "e", "f"}}, tags);
    v.require(tag_entropy(prof, 0) == 0.0, "single-tag entropy not 0");
    v.require(tag_entropy(prof, 1) == 1.0, "uniform 4-tag entropy not exactly 1");
  }
  {
    const std::map<std::string, std::set<std::string>> tags{{"a", {"x"}}, {"b", {"y"}}, {"c", {"x", "y"}}, {"d", {"x", "y"}}};
    const auto prof = make_tag_profile({{"a", "b"}, {"c", "d"}}, tags);
    v.require(hhi(prof, 0) == 0.5, "HHI of two disjoint tags not 0.5");
    v.require(hhi(prof, 1) == 2.0, "HHI of two shared tags not 2.0");
  }
  double h_pure = 0, h_rand = 0, c_pure = 0, c_rand = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 r(seed);
    std::map<std::string, std::set<std::string>> tags;
    std::vector<std::string> ids;
    for (int i = 0; i < 12; ++i) {
      const std::string id = "p" + std::to_string(i);
      ids.push_back(id);
      tags[id] = {"topic" + std::to_string(i / 3)};
      if (std::bernoulli_distribution(0.3)(r)) tags[id].insert("extra" + std::to_string(r() % 6));
    }
    std::vector<std::vector<std::string>> pure, random;
    for (int c = 0; c < 4; ++c) pure.emplace_back(ids.begin() + 3 * c, ids.begin() + 3 * c + 3);
    std::shuffle(ids.begin(), ids.end(), r);
    for (int c = 0; c < 4; ++c) random.emplace_back(ids.begin() + 3 * c, ids.begin() + 3 * c + 3);
    const auto pp = make_tag_profile(pure, tags), pr = make_tag_profile(random, tags);
    for (std::size_t c = 0; c < 4; ++c) {
      h_pure += tag_entropy(pp, c);
      h_rand += tag_entropy(pr, c);
      c_pure += hhi(pp, c);
      c_rand += hhi(pr, c);
    }
  }
  v.require(h_pure < h_rand, "tag-pure groups not lower in entropy");
  v.require(c_pure > c_rand, "tag-pure groups not higher in HHI");
  if (v.ok) {
    v.detail = "mean entropy " + fmt(h_pure / 400) + " vs " + fmt(h_rand / 400) + ", mean HHI " + fmt(c_pure / 400) + " vs " +
               fmt(c_rand / 400);
  }
  return v;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).generic_string()] = ss.str();
  }
  return files;
}

Verdict end_to_end() {
  const auto t0 = Clock::now();
  Verdict v;
  fixtures::TempDir a("acc_a"), b("acc_b"), id("acc_id");
  pipeline::RunResult first;
  for (const auto* dir : {&a, &b}) {
    auto cfg = fixtures::task_config();
    cfg.jobs = 4;
    fixtures::Bench bench(cfg);
    first = bench.run_default();
    pipeline::write_run(dir->path(), bench.task, bench.cfg, first);
    analysis::write_report(dir->path());
  }
  v.require(tree(a.path()) == tree(b.path()), "run directories differ");
  for (const auto& c : first.clusters) {
    v.require(!c.keep_originals && c.selected == 2, "cluster " + std::to_string(c.index) + " missed the planted candidate");
  }

  auto cfg = fixtures::task_config();
  cfg.gateway.sampler_endpoint = "stub:empty";
  fixtures::Bench bench(cfg);
  pipeline::write_run(id.path(), bench.task, bench.cfg, bench.run_default());
  const auto report = analysis::build_report(id.path());
  v.require(report.mdl_ratio == 1.0 && report.token_ratio == 1.0,
            "identity ratios " + fmt(report.mdl_ratio) + ", " + fmt(report.token_ratio));
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "took " + fmt(secs) + " s");
  if (v.ok) v.detail = "identical run dirs, planted selection in both clusters, identity ratios 1, " + fmt(secs) + " s";
  return v;
}

Verdict incremental() {
  Verdict v;
  fixtures::Bench bench(fixtures::task_config(pipeline::Mode::incremental));
  const auto r = bench.run_default();
  v.require(!r.history.empty() && r.history[0].entries().empty() && r.history[0].preamble().empty(), "initial library not empty");
  for (std::size_t t = 1; t < r.history.size(); ++t) {
    const auto& prev = r.history[t - 1];
    const auto& cur = r.history[t];
    const bool prefix = prev.entries().size() <= cur.entries().size() &&
                        std::equal(prev.entries().begin(), prev.entries().end(), cur.entries().begin()) &&
                        std::equal(prev.preamble().begin(), prev.preamble().end(), cur.preamble().begin());
    v.require(prefix, "revision " + std::to_string(t) + " dropped entries");
  }
  const auto& second = r.clusters.at(1);
  const auto* reused = r.library.find("read_ints");
  v.require(reused && reused->origin_cluster == 0, "helper not contributed by the first cluster");
  v.require(std::find(second.retrieved.begin(), second.retrieved.end(), "read_ints") != second.retrieved.end(),
            "helper not retrieved by the second cluster");
  bool called = false;
  for (const auto& id : second.unit_ids) called |= r.rewritten.at(id).find("read_ints(") != std::string::npos;
  v.require(called, "second cluster does not call the helper");
  const std::string text = r.library.text();
  v.require(text.find("def read_ints") == text.rfind("def read_ints"), "helper duplicated");
  if (v.ok) v.detail = std::to_string(r.history.size() - 1) + " revisions, read_ints reused by cluster 1 without duplication";
  return v;
}

Verdict bradley_terry() {
  Verdict v;
  std::vector<analysis::Comparison> c(3, {"a", "b"});
  c.push_back({"b", "a"});
  const auto two = analysis::bradley_terry_fit(c, "b");
  const double ratio = two.strength.at("a") / two.strength.at("b");
  v.require(std::abs(ratio - 3.0) <= 1e-6, "3-of-4 ratio " + fmt(ratio));

  const std::vector<std::pair<std::string, double>> truth{{"x", 2.0}, {"y", 1.5}, {"z", 1.0}};
  int correct = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<analysis::Comparison> cmp;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = i + 1; j < 3; ++j) {
        const double p = truth[i].second / (truth[i].second + truth[j].second);
        for (int d = 0; d < 500; ++d) {
          if (u(rng) < p) cmp.push_back({truth[i].first, truth[j].first});
          else cmp.push_back({truth[j].first, truth[i].first});
        }
      }
    }
    const auto fit = analysis::bradley_terry_fit(cmp, "z");
    if (fit.strength.at("x") > fit.strength.at("y") && fit.strength.at("y") > fit.strength.at("z")) ++correct;
  }
  v.require(correct >= 95, "ordering recovered in " + std::to_string(correct) + "/100");
  if (v.ok) v.detail = "ratio " + fmt(ratio) + ", ordering recovered in " + std::to_string(correct) + "/100 seeds";
  return v;
}

Verdict usage() {
  Verdict v;
  const std::string library =
      "import math\n\n\ndef area(r):\n    return math.pi * r * r\n\n\n"
      "def perimeter(r):\n    return 2 * math.pi * r\n\n\n"
      "class Box:\n    def __init__(self, w):\n        self.w = w\n\n\n"
      "def unused():\n    return 0\n";
  const std::vector<std::string> rewritten{
      "from codebank import *\nprint(area(1), area(2))\nb = Box(3)\n",
      "from codebank import *\nprint(area(perimeter(1)))\n",
  };
  const auto s = code::usage_stats(library, rewritten);
  v.require(s.num_definitions == 4, "definitions " + std::to_string(s.num_definitions));
  v.require(s.calls_per_definition == std::map<std::string, std::int64_t>{{"Box", 1}, {"area", 3}, {"perimeter", 1}, {"unused", 0}},
            "call counts differ");
  v.require(s.avg_calls == 1.25, "avg calls " + fmt(s.avg_calls));
  v.require(s.single_use_fraction == 0.5, "single use " + fmt(s.single_use_fraction));
  v.require(s.unused_count == 1, "unused " + std::to_string(s.unused_count));

  fixtures::TempDir dir("acc_usage");
  fixtures::Bench bench(fixtures::task_config());
  pipeline::write_run(dir.path(), bench.task, bench.cfg, bench.run_default());
  const auto report = analysis::write_report(dir.path());
  v.require(report.library_functions == 3 && report.avg_calls == 4.0 && report.single_use == 0.0, "fixture run usage differs");
  std::ifstream in(dir / "report.json");
  const Json j = Json::parse(in);
  for (const char* key : {"Pass Rate", "Pass Rate Improvement", "MDL Ratio", "Token Ratio", "Library Functions",
                          "Avg Calls per Function", "% Single Use Functions"}) {
    v.require(j.contains(key), std::string("report.json lacks '") + key + "'");
  }
  if (v.ok) v.detail = "hand counts exact, all report keys present";
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gate soundness", gate_soundness},
      {"best@k unbiasedness", best_at_k_unbiased},
      {"best@k monotonicity", best_at_k_monotone},
      {"cyclomatic complexity vs control-flow graph", cc_matches_cfg},
      {"token count vs description length divergence", tokens_vs_mdl},
      {"coherence measures", coherence},
      {"end-to-end determinism", end_to_end},
      {"incremental library semantics", incremental},
      {"bradley-terry", bradley_terry},
      {"usage statistics and report keys", usage},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.ok = false;
      v.detail = std::string("exception: ") + e.what();
    }
    if (!v.ok) ++failed;
    std::cout << (v.ok ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
