#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "librarian/analysis.hpp"
#include "librarian/errors.hpp"
#include "librarian/pipeline.hpp"
#include "librarian/scoring.hpp"

namespace fs = std::filesystem;
using namespace librarian;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kInvalidTask = 2, kGatewayFailure = 3, kUnparsable = 4, kIncompleteRun = 5 };

constexpr const char* kConfigName = "librarian.json";

// Flag values; unset optionals leave lower layers untouched.
struct Overrides {
  std::string config_file;
  bool dry_run = false;
  std::optional<std::int64_t> K;
  std::optional<std::size_t> S;
  std::optional<std::string> metric;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  std::optional<std::size_t> top_m;
  std::optional<std::size_t> max_units;
  std::optional<std::string> tokenizer;
  std::optional<std::string> sampler;
  std::optional<std::string> scorer;
  std::optional<std::string> embedder;
  std::optional<std::string> cache_dir;
};

Json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot read " + p.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(p.string() + ": " + e.what());
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* env(const char* name) {
  const char* v = std::getenv(name);
  return v && *v ? v : nullptr;
}

// defaults < config file(s) < environment < flags
pipeline::RunConfig resolve_config(const Overrides& o, const std::optional<fs::path>& task_dir) {
  pipeline::RunConfig defaults;
  defaults.jobs = std::max(1u, std::thread::hardware_concurrency());
  Json merged = defaults;

  std::vector<fs::path> files;
  if (!o.config_file.empty()) files.emplace_back(o.config_file);
  else if (fs::exists(kConfigName)) files.emplace_back(kConfigName);
  if (task_dir && fs::exists(*task_dir / kConfigName)) files.push_back(*task_dir / kConfigName);
  for (const auto& f : files) merged.merge_patch(read_json_file(f));

  pipeline::RunConfig cfg = merged.get<pipeline::RunConfig>();
  auto& gw = cfg.gateway;
  if (auto v = env("LIBRARIAN_SAMPLER_ENDPOINT")) gw.sampler_endpoint = v;
  if (auto v = env("LIBRARIAN_SCORER_ENDPOINT")) gw.scorer_endpoint = v;
  if (auto v = env("LIBRARIAN_EMBEDDER_ENDPOINT")) gw.embedder_endpoint = v;
  if (auto v = env("LIBRARIAN_SAMPLER_MODEL")) gw.sampler_model = v;
  if (auto v = env("LIBRARIAN_SCORER_MODEL")) gw.scorer_model = v;
  if (auto v = env("LIBRARIAN_EMBEDDER_MODEL")) gw.embedder_model = v;
  if (auto v = env("LIBRARIAN_CACHE_DIR")) gw.cache_dir = v;
  if (auto v = env("LIBRARIAN_API_KEY")) gw.api_key = v;
  else if (auto k = env("OPENAI_API_KEY")) gw.api_key = k;
  if (auto v = env("LIBRARIAN_JOBS")) cfg.jobs = std::stoul(v);
  if (auto v = env("LIBRARIAN_SEED")) cfg.seed = std::stoull(v);

  if (o.K) cfg.K = *o.K;
  if (o.S) cfg.S = *o.S;
  if (o.metric) cfg.metric = scoring::metric_from_string(*o.metric);
  if (o.mode) cfg.mode = pipeline::mode_from_string(*o.mode);
  if (o.seed) cfg.seed = *o.seed;
  if (o.jobs) cfg.jobs = *o.jobs;
  if (o.top_m) cfg.retrieval_top_m = *o.top_m;
  if (o.max_units) cfg.max_units = *o.max_units;
  if (o.tokenizer) cfg.tokenizer = *o.tokenizer;
  if (o.sampler) gw.sampler_endpoint = *o.sampler;
  if (o.scorer) gw.scorer_endpoint = *o.scorer;
  if (o.embedder) gw.embedder_endpoint = *o.embedder;
  if (o.cache_dir) gw.cache_dir = *o.cache_dir;
  gw.tokenizer = cfg.tokenizer;
  if (cfg.jobs == 0) cfg.jobs = 1;
  pipeline::validate(cfg);
  return cfg;
}

harness::HarnessConfig harness_config(const pipeline::RunConfig& cfg) {
  harness::HarnessConfig h;
  h.limits = cfg.limits;
  h.shim_command = cfg.shim_command;
  h.max_processes = cfg.jobs;
  return h;
}

Task load_valid_task(const fs::path& dir) {
  Task task = load_task(dir);
  const auto problems = validate_task(task);
  if (!problems.empty()) {
    std::string msg = "invalid task " + dir.string() + ":";
    for (const auto& p : problems) msg += "\n  " + p;
    throw InvalidTask(msg);
  }
  return task;
}

void print_json(const Json& j) { std::cout << j.dump(2) << "\n"; }

int cmd_validate(const fs::path& task_dir, const Overrides& o) {
  const Task task = load_task(task_dir);
  const auto problems = validate_task(task);
  if (o.dry_run) {
    std::cout << "would validate " << task.units.size() << " units of task '" << task.name << "'\n";
    return kOk;
  }
  for (const auto& p : problems) std::cerr << p << "\n";
  if (!problems.empty()) return kInvalidTask;
  std::cout << "task '" << task.name << "': " << task.units.size() << " units, " << task.test_registry.size()
            << " suites, ok\n";
  return kOk;
}

int cmd_cluster(const fs::path& task_dir, const std::string& out, const Overrides& o) {
  const Task task = load_valid_task(task_dir);
  const auto cfg = resolve_config(o, task_dir);
  if (o.dry_run) {
    print_json({{"task", task.name}, {"units", task.units.size()}, {"S", cfg.S}, {"min_sloc", cfg.min_sloc}, {"config", cfg}});
    return kOk;
  }
  gateway::Gateway gw(cfg.gateway);
  const auto descriptions = pipeline::describe_units(task, gw);
  const auto plan = pipeline::plan_clusters(task, descriptions, cfg, gw);
  Json doc = plan;
  doc["descriptions"] = descriptions;
  if (out.empty()) {
    print_json(doc);
  } else {
    std::ofstream(out) << doc.dump(2) << "\n";
  }
  return kOk;
}

int cmd_refactor(const fs::path& task_dir, const fs::path& out, const std::string& seed_run, bool force, const Overrides& o) {
  const Task task = load_valid_task(task_dir);
  const auto cfg = resolve_config(o, task_dir);
  pipeline::LibraryState seed_library;
  if (!seed_run.empty()) seed_library = pipeline::load_library(seed_run);
  if (o.dry_run) {
    print_json({{"task", task.name},
                {"units", task.units.size()},
                {"out", out.generic_string()},
                {"seed_library_entries", seed_library.entries().size()},
                {"config", cfg}});
    return kOk;
  }
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) throw Error(out.string() + " is not empty (use --force to replace it)");
    fs::remove_all(out);
  }

  gateway::Gateway gw(cfg.gateway);
  harness::Harness h(task, harness_config(cfg));
  const auto descriptions = pipeline::describe_units(task, gw);
  const auto plan = pipeline::plan_clusters(task, descriptions, cfg, gw);
  const auto result = pipeline::run(task, plan, descriptions, cfg, {gw, h}, seed_library);
  pipeline::write_run(out, task, cfg, result);
  const auto report = analysis::write_report(out);

  for (const auto& c : result.clusters) {
    std::cout << "cluster " << c.index << " (" << c.unit_ids.size() << " units): ";
    if (c.keep_originals) std::cout << "kept originals\n";
    else std::cout << "selected sample " << c.selected << "\n";
  }
  std::cout << analysis::kMdlRatio << ": " << report.mdl_ratio << "\n"
            << analysis::kPassRate << ": " << report.pass_rate << "\n"
            << analysis::kLibraryFunctions << ": " << report.library_functions << "\n"
            << "run written to " << out.string() << "\n";
  return kOk;
}

// A candidate directory holds codebank.py (optional) and one file per task unit id.
Candidate load_candidate_dir(const fs::path& dir, const Task& task) {
  if (!fs::is_directory(dir)) throw UnitMismatch("candidate directory " + dir.string() + " not found");
  std::map<std::string, std::string> rewritten;
  for (const auto& u : task.units) {
    const fs::path p = dir / u.id;
    if (!fs::is_regular_file(p)) throw UnitMismatch("candidate is missing unit " + u.id);
    rewritten[u.id] = read_file(p);
  }
  const fs::path lib = dir / "codebank.py";
  return Candidate(fs::exists(lib) ? read_file(lib) : std::string{}, std::move(rewritten));
}

int cmd_score(const fs::path& candidate_dir, const fs::path& task_dir, bool baseline, const std::string& against,
              const Overrides& o) {
  const Task task = load_valid_task(task_dir);
  const auto cfg = resolve_config(o, task_dir);
  const Candidate cand = load_candidate_dir(candidate_dir, task);
  std::optional<Candidate> reference;
  if (!against.empty()) reference = load_candidate_dir(against, task);
  if (o.dry_run) {
    print_json({{"task", task.name}, {"candidate", candidate_dir.generic_string()}, {"units", cand.rewritten().size()},
                {"metric", scoring::to_string(cfg.metric)}, {"baseline", baseline || reference.has_value()}});
    return kOk;
  }
  // Parse failures surface as errors here rather than as an unscorable card.
  scoring::score_cc(cand);

  gateway::Gateway gw(cfg.gateway);
  harness::Harness h(task, harness_config(cfg));
  const scoring::ScoringContext ctx{&gw, cfg.tokenizer, {}};

  std::map<std::string, std::string> originals;
  for (const auto& u : task.units) originals[u.id] = u.code;
  scoring::Baseline base;
  for (const auto& u : task.units) base.outcomes[u.id] = h.run_suite(u.id, u.code, "");
  base.card = scoring::score_candidate(Candidate("", originals), ctx);

  std::map<std::string, TestOutcome> outcomes;
  for (const auto& [id, code] : cand.rewritten()) outcomes[id] = h.run_suite(id, code, cand.library());
  ScoreCard card = scoring::score_candidate(cand, ctx);
  if (!card.note.empty()) throw ParseError(card.note, 0, 0);
  card.loss = scoring::gated_loss(cand, card, base, outcomes, cfg.metric);

  Json out{{"metric", scoring::to_string(cfg.metric)}, {"card", Json(card)}, {"outcomes", outcomes}};
  if (baseline || reference) {
    const ScoreCard ref = reference ? scoring::score_candidate(*reference, ctx) : base.card;
    Json ratios;
    for (auto m : scoring::kAllMetrics) {
      const double b = scoring::metric_value(ref, m);
      const double v = scoring::metric_value(card, m);
      ratios[scoring::to_string(m)] = b == 0.0 ? (v == 0.0 ? 1.0 : v) : v / b;
    }
    out["baseline"] = Json(ref);
    out["ratios"] = ratios;
  }
  print_json(out);
  return kOk;
}

int cmd_analyze(const fs::path& run_dir, const std::string& judgements, double threshold, const Overrides& o) {
  if (!judgements.empty()) {
    const Json doc = read_json_file(judgements);
    std::vector<analysis::Comparison> comparisons;
    std::vector<analysis::Judgement> raw;
    for (const auto& j : doc) {
      if (j.contains("loser")) comparisons.push_back({j.at("winner"), j.at("loser")});
      else raw.push_back({j.value("instance", std::string{}), j.at("a"), j.at("b"), j.at("winner")});
    }
    const auto kept = analysis::consensus_filter(raw, threshold);
    comparisons.insert(comparisons.end(), kept.begin(), kept.end());
    if (o.dry_run) {
      print_json({{"comparisons", comparisons.size()}, {"judgements", raw.size()}});
      return kOk;
    }
    const auto fit = analysis::bradley_terry_fit(comparisons);
    Json items = Json::object();
    for (const auto& id : fit.items) {
      const auto wp = analysis::win_probability(fit, id, fit.reference);
      items[id] = {{"strength", fit.strength.at(id)}, {"p_beats_reference", wp.p}, {"ci", {wp.lower, wp.upper}}};
    }
    print_json({{"reference", fit.reference}, {"converged", fit.converged}, {"iterations", fit.iterations}, {"items", items}});
    return kOk;
  }
  if (o.dry_run) {
    analysis::build_report(run_dir);
    std::cout << "would write report.json, scaling.csv and coherence.csv to " << run_dir.string() << "\n";
    return kOk;
  }
  print_json(analysis::to_json(analysis::write_report(run_dir)));
  return kOk;
}

void add_run_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_file, "JSON config file (default: ./librarian.json when present)");
  cmd->add_flag("--dry-run", o.dry_run, "Print the resolved plan and exit without side effects");
  cmd->add_option("-K,--samples", o.K, "Candidates sampled per cluster");
  cmd->add_option("-S,--cluster-size", o.S, "Target cluster size");
  cmd->add_option("--metric", o.metric, "Reranking metric: tokens, mdl, cc or mi");
  cmd->add_option("--mode", o.mode, "parallel or incremental");
  cmd->add_option("--seed", o.seed, "Sampling seed");
  cmd->add_option("--jobs", o.jobs, "Worker threads (default: logical cores)");
  cmd->add_option("--top-m", o.top_m, "Library entries retrieved per cluster in incremental mode");
  cmd->add_option("--max-units", o.max_units, "Process only the first clusters covering this many units");
  cmd->add_option("--tokenizer", o.tokenizer, "ref-model or fallback");
  cmd->add_option("--sampler", o.sampler, "Sampling endpoint URL or stub:<profile>");
  cmd->add_option("--scorer", o.scorer, "Scoring endpoint URL or stub:<profile>");
  cmd->add_option("--embedder", o.embedder, "Embedding endpoint URL or stub:<profile>");
  cmd->add_option("--cache-dir", o.cache_dir, "Response cache directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn a shared helper library from a set of programs and their tests"};
  app.require_subcommand(1);
  Overrides o;

  std::string task_dir, out_dir, seed_run, candidate_dir, against, run_dir, judgements, plan_out;
  bool force = false, baseline = false;
  double threshold = 0.75;

  auto* refactor = app.add_subcommand("refactor", "Cluster, sample, test and select; writes a run directory");
  refactor->add_option("task", task_dir, "Task directory")->required()->check(CLI::ExistingDirectory);
  refactor->add_option("-o,--out", out_dir, "Run directory to create")->required();
  refactor->add_option("--seed-library", seed_run, "Start from the library of an earlier run")->check(CLI::ExistingDirectory);
  refactor->add_flag("--force", force, "Replace a non-empty run directory");
  add_run_options(refactor, o);

  auto* score = app.add_subcommand("score", "Score a candidate directory against a task");
  score->add_option("candidate", candidate_dir, "Directory with codebank.py and one file per unit")->required();
  score->add_option("task", task_dir, "Task directory")->required()->check(CLI::ExistingDirectory);
  score->add_flag("--baseline", baseline, "Also print ratios against the original programs");
  score->add_option("--against", against, "Print ratios against another candidate directory instead");
  add_run_options(score, o);

  auto* analyze = app.add_subcommand("analyze", "Write report.json, scaling.csv and coherence.csv for a run");
  analyze->add_option("run", run_dir, "Run directory");
  analyze->add_option("--bt", judgements, "Fit Bradley-Terry strengths to a JSON list of comparisons or judgements");
  analyze->add_option("--consensus", threshold, "Majority share needed to keep a judged instance");
  analyze->add_flag("--dry-run", o.dry_run, "Check the run without writing anything");

  auto* cluster = app.add_subcommand("cluster", "Print the cluster plan of a task");
  cluster->add_option("task", task_dir, "Task directory")->required()->check(CLI::ExistingDirectory);
  cluster->add_option("-o,--out", plan_out, "Write the plan here instead of stdout");
  add_run_options(cluster, o);

  auto* validate = app.add_subcommand("validate", "Check a task manifest");
  validate->add_option("task", task_dir, "Task directory")->required()->check(CLI::ExistingDirectory);
  validate->add_flag("--dry-run", o.dry_run, "Load the task only");

  CLI11_PARSE(app, argc, argv);

  try {
    if (refactor->parsed()) return cmd_refactor(task_dir, out_dir, seed_run, force, o);
    if (score->parsed()) return cmd_score(candidate_dir, task_dir, baseline, against, o);
    if (analyze->parsed()) {
      if (run_dir.empty() && judgements.empty()) throw Error("analyze needs a run directory or --bt");
      return cmd_analyze(run_dir, judgements, threshold, o);
    }
    if (cluster->parsed()) return cmd_cluster(task_dir, plan_out, o);
    if (validate->parsed()) return cmd_validate(task_dir, o);
  } catch (const InvalidTask& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalidTask;
  } catch (const EndpointUnavailable& e) {
    std::cerr << "gateway error: " << e.what() << "\n";
    return kGatewayFailure;
  } catch (const BudgetExceeded& e) {
    std::cerr << "gateway error: " << e.what() << "\n";
    return kGatewayFailure;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kUnparsable;
  } catch (const UnitMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUnparsable;
  } catch (const IncompleteRun& e) {
    std::cerr << "incomplete run: " << e.what() << "\n";
    return kIncompleteRun;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
