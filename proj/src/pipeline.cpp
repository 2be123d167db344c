#include "librarian/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "librarian/code/lexer.hpp"
#include "librarian/code/metrics.hpp"
#include "librarian/digest.hpp"
#include "librarian/errors.hpp"
#include "librarian/protocol.hpp"

namespace fs = std::filesystem;

namespace librarian::pipeline {

std::string to_string(Mode m) { return m == Mode::incremental ? "incremental" : "parallel"; }

Mode mode_from_string(std::string_view s) {
  if (s == "parallel") return Mode::parallel;
  if (s == "incremental") return Mode::incremental;
  throw Error("unknown mode '" + std::string(s) + "' (expected parallel or incremental)");
}

void to_json(Json& j, const RunConfig& c) {
  j = Json{{"K", c.K},
           {"S", c.S},
           {"metric", scoring::to_string(c.metric)},
           {"mode", to_string(c.mode)},
           {"retrieval_top_m", c.retrieval_top_m},
           {"seed", c.seed},
           {"jobs", c.jobs},
           {"min_sloc", c.min_sloc},
           {"max_units", c.max_units},
           {"tokenizer", c.tokenizer},
           {"gateway", c.gateway},
           {"limits",
            {{"per_test_timeout_s", c.limits.per_test_timeout_s},
             {"suite_timeout_s", c.limits.suite_timeout_s},
             {"cpu_seconds", c.limits.cpu_seconds},
             {"memory_bytes", c.limits.memory_bytes}}},
           {"shim_command", c.shim_command}};
}

void from_json(const Json& j, RunConfig& c) {
  RunConfig d;
  c.K = j.value("K", d.K);
  c.S = j.value("S", d.S);
  c.metric = scoring::metric_from_string(j.value("metric", scoring::to_string(d.metric)));
  c.mode = mode_from_string(j.value("mode", to_string(d.mode)));
  c.retrieval_top_m = j.value("retrieval_top_m", d.retrieval_top_m);
  c.seed = j.value("seed", d.seed);
  c.jobs = j.value("jobs", d.jobs);
  c.min_sloc = j.value("min_sloc", d.min_sloc);
  c.max_units = j.value("max_units", d.max_units);
  c.tokenizer = j.value("tokenizer", d.tokenizer);
  c.gateway = j.value("gateway", Json::object()).get<gateway::GatewayConfig>();
  const Json limits = j.value("limits", Json::object());
  c.limits.per_test_timeout_s = limits.value("per_test_timeout_s", d.limits.per_test_timeout_s);
  c.limits.suite_timeout_s = limits.value("suite_timeout_s", d.limits.suite_timeout_s);
  c.limits.cpu_seconds = limits.value("cpu_seconds", d.limits.cpu_seconds);
  c.limits.memory_bytes = limits.value("memory_bytes", d.limits.memory_bytes);
  c.shim_command = j.value("shim_command", d.shim_command);
}

void validate(const RunConfig& c) {
  if (c.K < 1) throw Error("K must be at least 1");
  if (c.S < 1) throw Error("S must be at least 1");
}

void to_json(Json& j, const LibraryEntry& e) {
  j = Json{{"name", e.name}, {"source", e.source}, {"origin_cluster", e.origin_cluster}};
}

void from_json(const Json& j, LibraryEntry& e) {
  j.at("name").get_to(e.name);
  j.at("source").get_to(e.source);
  e.origin_cluster = j.value("origin_cluster", std::size_t{0});
}

namespace {

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    lines.emplace_back(text.substr(pos, eol - pos));
    pos = eol + 1;
  }
  return lines;
}

bool blank(std::string_view line) { return line.find_first_not_of(" \t\r\f\v") == std::string_view::npos; }

// Joins lines, dropping leading and trailing blank ones; result ends with one newline or is empty.
std::string join_trimmed(const std::vector<std::string>& lines, std::size_t begin, std::size_t end) {
  while (begin < end && blank(lines[begin])) ++begin;
  while (end > begin && blank(lines[end - 1])) --end;
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    out += lines[i];
    out += '\n';
  }
  return out;
}

bool has_code(const std::string& text) {
  for (const auto& t : code::tokenize(text)) {
    switch (t.kind) {
      case code::TokenKind::name:
      case code::TokenKind::number:
      case code::TokenKind::string:
      case code::TokenKind::op:
        return true;
      default:
        break;
    }
  }
  return false;
}

std::string join_parts(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (p.empty()) continue;
    if (!out.empty()) out += "\n\n";
    out += p;
  }
  return out;
}

std::string join_entries(const std::vector<LibraryEntry>& entries) {
  std::vector<std::string> parts;
  for (const auto& e : entries) parts.push_back(e.source);
  return join_parts(parts);
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first failure.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::jthread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (failure) std::rethrow_exception(failure);
}

std::vector<const SourceUnit*> resolve_units(const Task& task, const std::vector<std::string>& ids) {
  std::vector<const SourceUnit*> units;
  for (const auto& id : ids) {
    const SourceUnit* u = task.find_unit(id);
    if (!u) throw InvalidTask("unknown unit '" + id + "'");
    units.push_back(u);
  }
  return units;
}

}  // namespace

SplitLibrary split_library(const std::string& text, std::size_t origin_cluster) {
  SplitLibrary out;
  if (text.empty()) return out;
  const auto summary = code::parse(text);
  const auto lines = split_lines(text);
  std::size_t cursor = 0;  // 0-based line index
  auto flush = [&](std::size_t end) {
    std::string chunk = join_trimmed(lines, cursor, end);
    if (!chunk.empty() && has_code(chunk)) out.preamble.push_back(std::move(chunk));
  };
  for (const auto& d : summary.definitions) {
    flush(d.line - 1);
    out.entries.push_back({d.name, join_trimmed(lines, d.line - 1, d.end_line), origin_cluster});
    cursor = d.end_line;
  }
  flush(lines.size());
  return out;
}

std::string rename_identifier(const std::string& source, const std::string& from, const std::string& to) {
  const auto tokens = code::tokenize(source);
  auto lines = split_lines(source);
  const bool trailing_newline = source.ends_with('\n');
  std::vector<const code::Token*> significant;
  for (const auto& t : tokens) {
    if (t.kind == code::TokenKind::name || t.kind == code::TokenKind::number || t.kind == code::TokenKind::string ||
        t.kind == code::TokenKind::op) {
      significant.push_back(&t);
    }
  }
  // Backwards so that columns earlier on the same line stay valid.
  for (std::size_t k = significant.size(); k-- > 0;) {
    const auto& t = *significant[k];
    if (t.kind != code::TokenKind::name || t.text != from) continue;
    if (k > 0 && significant[k - 1]->text == ".") {
      if (k < 2 || significant[k - 2]->text != protocol::kLibraryModule) continue;
    }
    lines[t.line - 1].replace(t.col, t.text.size(), to);
  }
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  if (trailing_newline) out += '\n';
  return out;
}

const LibraryEntry* LibraryState::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::string LibraryState::text() const { return text_from(0, 0); }

std::string LibraryState::text_from(std::size_t preamble_offset, std::size_t entry_offset) const {
  std::vector<std::string> parts;
  for (std::size_t i = preamble_offset; i < preamble_.size(); ++i) parts.push_back(preamble_[i]);
  std::string head;
  for (const auto& p : parts) head += p;
  parts.assign(1, head);
  for (std::size_t i = entry_offset; i < entries_.size(); ++i) parts.push_back(entries_[i].source);
  return join_parts(parts);
}

std::map<std::string, std::string> LibraryState::merge(const std::string& delta, std::size_t cluster,
                                                       std::map<std::string, std::string>& rewritten) {
  SplitLibrary split = split_library(delta, cluster);
  std::set<std::string> taken;
  for (const auto& e : entries_) taken.insert(e.name);
  for (const auto& e : split.entries) taken.insert(e.name);

  std::map<std::string, std::string> renames;
  std::vector<LibraryEntry> fresh;
  for (auto& e : split.entries) {
    const LibraryEntry* existing = find(e.name);
    if (!existing) {
      fresh.push_back(e);
      continue;
    }
    if (existing->source == e.source) continue;
    std::string name;
    for (int n = 2;; ++n) {
      name = e.name + "_v" + std::to_string(n);
      if (!taken.contains(name)) break;
    }
    taken.insert(name);
    renames[e.name] = name;
    fresh.push_back(e);
  }
  for (auto& e : fresh) {
    for (const auto& [from, to] : renames) e.source = rename_identifier(e.source, from, to);
    if (auto it = renames.find(e.name); it != renames.end()) e.name = it->second;
  }
  for (auto& [id, src] : rewritten) {
    for (const auto& [from, to] : renames) src = rename_identifier(src, from, to);
  }
  for (auto& chunk : split.preamble) {
    if (std::find(preamble_.begin(), preamble_.end(), chunk) == preamble_.end()) preamble_.push_back(chunk);
  }
  for (auto& e : fresh) entries_.push_back(std::move(e));
  collisions_ += renames.size();
  ++revision_;
  return renames;
}

void to_json(Json& j, const LibraryState& s) {
  j = Json{{"revision", s.revision_}, {"collisions", s.collisions_}, {"preamble", s.preamble_}, {"entries", s.entries_}};
}

void from_json(const Json& j, LibraryState& s) {
  s.revision_ = j.value("revision", std::size_t{0});
  s.collisions_ = j.value("collisions", std::size_t{0});
  s.preamble_ = j.value("preamble", std::vector<std::string>{});
  s.entries_ = j.value("entries", std::vector<LibraryEntry>{});
}

std::string build_prompt(const std::vector<const SourceUnit*>& cluster, const std::vector<LibraryEntry>& retrieved) {
  std::string p =
      "Refactor the programs below into a shared library of helper functions plus rewritten programs.\n"
      "Move logic the programs have in common into general, well-named helpers. Each rewritten program\n"
      "must behave exactly like the original and imports the helpers with `from codebank import *`.\n";
  if (!retrieved.empty()) {
    p += "The retrieved helpers already exist in codebank: call them where useful, do not redefine them.\n";
  }
  p += "\nAnswer in exactly this format and nothing else:\n\n";
  p += protocol::kHelperMarker;
  p += "\n<new helper functions and classes, possibly none>\n";
  p += protocol::program_marker("<id>");
  p += "\n<rewritten program>\n\n";
  p += "Give one PROGRAM section for every original program, with the same id.\n\n";
  if (!retrieved.empty()) {
    p += protocol::kRetrievedMarker;
    p += "\n";
    for (const auto& e : retrieved) {
      p += e.source;
      if (!e.source.ends_with('\n')) p += '\n';
      p += '\n';
    }
  }
  p += protocol::kOriginalsMarker;
  p += "\n";
  for (const SourceUnit* u : cluster) {
    p += protocol::program_marker(u->id) + "\n";
    if (u->description) {
      for (const auto& line : split_lines(*u->description)) {
        p += protocol::kDescriptionPrefix;
        p += line + "\n";
      }
    }
    p += u->code;
    if (!u->code.ends_with('\n')) p += '\n';
    p += '\n';
  }
  p += protocol::kEndMarker;
  p += "\n";
  return p;
}

Candidate parse_candidate(const std::string& completion, const std::vector<std::string>& cluster_ids,
                          Provenance provenance) {
  const auto lines = split_lines(completion);
  auto strip = [](std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
  };
  std::size_t i = 0;
  for (; i < lines.size(); ++i) {
    if (strip(lines[i]) == protocol::kHelperMarker) break;
    if (!blank(lines[i])) throw ProtocolError("text before the helper section");
  }
  if (i == lines.size()) throw ProtocolError("missing helper section marker");

  const std::set<std::string> expected(cluster_ids.begin(), cluster_ids.end());
  std::map<std::string, std::pair<std::size_t, std::size_t>> sections;
  std::size_t helper_begin = i + 1, helper_end = lines.size();
  std::string current;
  for (std::size_t k = i + 1; k < lines.size(); ++k) {
    std::string id;
    if (!protocol::parse_program_marker(lines[k], id)) continue;
    if (current.empty()) {
      helper_end = k;
    } else {
      sections[current].second = k;
    }
    if (!expected.contains(id)) throw ProtocolError("unknown program id '" + id + "'");
    if (sections.contains(id)) throw ProtocolError("duplicate program section '" + id + "'");
    sections[id] = {k + 1, lines.size()};
    current = id;
  }
  for (const auto& id : expected) {
    if (!sections.contains(id)) throw ProtocolError("missing program section '" + id + "'");
  }

  std::string library = join_trimmed(lines, helper_begin, helper_end);
  try {
    if (!has_code(library)) library.clear();
    if (!library.empty()) {
      std::set<std::string> names;
      for (const auto& d : code::parse(library).definitions) {
        if (!names.insert(d.name).second) throw ProtocolError("helper '" + d.name + "' defined twice");
      }
    }
  } catch (const ParseError& e) {
    throw ParseError("helper section: " + std::string(e.what()), e.line(), e.column());
  }
  std::map<std::string, std::string> rewritten;
  for (const auto& [id, span] : sections) {
    std::string src = join_trimmed(lines, span.first, span.second);
    if (src.empty()) throw ProtocolError("empty program section '" + id + "'");
    try {
      code::parse(src);
    } catch (const ParseError& e) {
      throw ParseError("program " + id + ": " + std::string(e.what()), e.line(), e.column());
    }
    rewritten.emplace(id, std::move(src));
  }
  return Candidate(std::move(library), std::move(rewritten), std::move(provenance));
}

std::vector<LibraryEntry> retrieve_relevant(const LibraryState& library, const std::vector<const SourceUnit*>& cluster,
                                            std::size_t m, gateway::Gateway& gw) {
  const auto& entries = library.entries();
  if (m == 0 || entries.empty() || cluster.empty()) return {};
  std::vector<std::string> texts;
  for (const auto& e : entries) texts.push_back(e.source);
  for (const SourceUnit* u : cluster) texts.push_back(u->description && !u->description->empty() ? *u->description : u->code);
  const auto vectors = gw.embed(texts);

  std::vector<std::pair<double, const LibraryEntry*>> ranked;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    double best = -2.0;
    for (std::size_t u = 0; u < cluster.size(); ++u) {
      const auto& a = vectors[e];
      const auto& b = vectors[entries.size() + u];
      double dot = 0.0;
      for (std::size_t d = 0; d < a.size(); ++d) dot += a[d] * b[d];
      best = std::max(best, dot);
    }
    ranked.emplace_back(best, &entries[e]);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->name < b.second->name;
  });
  std::vector<LibraryEntry> out;
  for (std::size_t k = 0; k < ranked.size() && k < m; ++k) out.push_back(*ranked[k].second);
  return out;
}

ClusterResult refactor_cluster(const Task& task, const std::vector<std::string>& cluster, std::size_t index,
                               const LibraryState& library, const std::vector<LibraryEntry>& retrieved,
                               const RunConfig& cfg, Services services) {
  validate(cfg);
  const auto units = resolve_units(task, cluster);
  ClusterResult result;
  result.index = index;
  result.unit_ids = cluster;
  for (const auto& e : retrieved) result.retrieved.push_back(e.name);
  result.prompt = build_prompt(units, retrieved);

  std::map<std::string, std::string> originals;
  for (const SourceUnit* u : units) {
    originals[u->id] = u->code;
    result.baseline.outcomes[u->id] = services.harness.run_suite(u->id, u->code, "");
  }
  result.baseline.card = scoring::score_candidate(Candidate("", originals), {&services.gateway, cfg.tokenizer, ""});

  std::string joined;
  for (const auto& id : cluster) joined += id + '\n';
  const auto completions = services.gateway.sample(result.prompt, cfg.K, cfg.seed + fnv1a64(joined));

  const std::set<std::string> retrieved_names(result.retrieved.begin(), result.retrieved.end());
  const std::string inherited = retrieved.empty() ? std::string() : join_entries(retrieved) + "\n\n";
  const std::string runtime_base = library.text();
  const scoring::ScoringContext ctx{&services.gateway, cfg.tokenizer, inherited};

  result.samples.resize(completions.size());
  parallel_for(completions.size(), cfg.jobs, [&](std::size_t i) {
    SampleRecord& rec = result.samples[i];
    rec.index = static_cast<std::int64_t>(i);
    rec.completion = completions[i].text;
    try {
      rec.candidate = parse_candidate(rec.completion, cluster, completions[i].provenance);
    } catch (const ProtocolError& e) {
      rec.error_kind = "protocol";
      rec.error = e.what();
      return;
    } catch (const ParseError& e) {
      rec.error_kind = "parse";
      rec.error = e.what();
      return;
    }
    const Candidate& c = *rec.candidate;
    for (const auto& e : split_library(c.library()).entries) {
      if (retrieved_names.contains(e.name)) {
        rec.error_kind = "retrieved-redefinition";
        rec.error = "redefines retrieved helper '" + e.name + "'";
        return;
      }
    }
    const std::string runtime = join_parts({runtime_base, c.library()});
    try {
      for (const auto& [id, src] : c.rewritten()) rec.outcomes[id] = services.harness.run_suite(id, src, runtime);
    } catch (const WorkspaceError& e) {
      rec.error_kind = "workspace";
      rec.error = e.what();
      return;
    } catch (const BackendProtocolError& e) {
      rec.error_kind = "workspace";
      rec.error = e.what();
      return;
    }
    rec.card = scoring::score_candidate(c, ctx);
    rec.card.loss = scoring::gated_loss(c, rec.card, result.baseline, rec.outcomes, cfg.metric);
  });

  std::vector<std::pair<const Candidate*, Loss>> scored;
  std::vector<std::size_t> sample_of;
  for (std::size_t i = 0; i < result.samples.size(); ++i) {
    const auto& rec = result.samples[i];
    if (rec.error_kind == "protocol") ++result.protocol_errors;
    if (rec.error_kind == "parse") ++result.parse_errors;
    if (!rec.candidate || !rec.error_kind.empty()) continue;
    scored.emplace_back(&*rec.candidate, rec.card.loss);
    sample_of.push_back(i);
  }
  const auto selection = scoring::select_best(scored);
  result.rewritten = originals;
  if (!selection.keep_originals) {
    result.keep_originals = false;
    result.selected = sample_of[selection.index];
    const Candidate& best = *result.samples[result.selected].candidate;
    result.delta_library = best.library();
    for (const auto& [id, src] : best.rewritten()) result.rewritten[id] = src;
  }
  return result;
}

std::map<std::string, std::string> describe_units(const Task& task, gateway::Gateway& gw) {
  std::map<std::string, std::string> out;
  for (const auto& u : task.units) out[u.id] = clustering::summarize(u, gw);
  return out;
}

clustering::ClusterPlan plan_clusters(const Task& task, const std::map<std::string, std::string>& descriptions,
                                      const RunConfig& cfg, gateway::Gateway& gw) {
  validate(cfg);
  auto eligible = clustering::filter_min_sloc(task.units, cfg.min_sloc);
  std::sort(eligible.begin(), eligible.end());
  clustering::ClusterPlan plan;
  plan.target_size = cfg.S;
  if (eligible.empty()) return plan;
  if (eligible.size() < cfg.S) {
    plan.ids = eligible;
    plan.clusters.push_back(eligible);
  } else {
    std::vector<std::string> texts;
    for (const auto& id : eligible) texts.push_back(descriptions.at(id));
    const auto vectors = gw.embed(texts);
    std::vector<std::pair<std::string, std::vector<double>>> keyed;
    for (std::size_t i = 0; i < eligible.size(); ++i) keyed.emplace_back(eligible[i], vectors[i]);
    plan = clustering::cluster_fixed_size(keyed, cfg.S);
  }
  if (cfg.max_units > 0) plan = clustering::first_units(plan, cfg.max_units);
  return plan;
}

RunResult run(const Task& task, const clustering::ClusterPlan& plan, const std::map<std::string, std::string>& descriptions,
              const RunConfig& cfg, Services services, const LibraryState& seed_library) {
  validate(cfg);
  Task described = task;
  for (auto& u : described.units) {
    if (auto it = descriptions.find(u.id); it != descriptions.end()) u.description = it->second;
  }

  RunResult r;
  r.plan = plan;
  r.descriptions = descriptions;
  r.history.push_back(seed_library);
  LibraryState lib = seed_library;
  const std::size_t n = plan.clusters.size();
  r.clusters.resize(n);

  if (cfg.mode == Mode::parallel) {
    parallel_for(n, cfg.jobs, [&](std::size_t c) {
      const auto units = resolve_units(described, plan.clusters[c]);
      const auto retrieved = retrieve_relevant(seed_library, units, cfg.retrieval_top_m, services.gateway);
      r.clusters[c] = refactor_cluster(described, plan.clusters[c], c, seed_library, retrieved, cfg, services);
    });
    for (std::size_t c = 0; c < n; ++c) {
      lib.merge(r.clusters[c].delta_library, c, r.clusters[c].rewritten);
      r.history.push_back(lib);
    }
  } else {
    for (std::size_t c = 0; c < n; ++c) {
      const auto units = resolve_units(described, plan.clusters[c]);
      const auto retrieved = retrieve_relevant(lib, units, cfg.retrieval_top_m, services.gateway);
      r.clusters[c] = refactor_cluster(described, plan.clusters[c], c, lib, retrieved, cfg, services);
      lib.merge(r.clusters[c].delta_library, c, r.clusters[c].rewritten);
      r.history.push_back(lib);
    }
  }
  r.library = lib;

  std::map<std::string, std::string> originals;
  for (const auto& u : task.units) originals[u.id] = u.code;
  r.rewritten = originals;
  for (const auto& c : r.clusters) {
    for (const auto& [id, src] : c.rewritten) r.rewritten[id] = src;
  }

  const std::string final_library = r.library.text();
  std::vector<std::string> ids;
  for (const auto& u : task.units) ids.push_back(u.id);
  std::vector<TestOutcome> before(ids.size()), after(ids.size());
  parallel_for(ids.size(), cfg.jobs, [&](std::size_t i) {
    before[i] = services.harness.run_suite(ids[i], originals.at(ids[i]), "");
    after[i] = services.harness.run_suite(ids[i], r.rewritten.at(ids[i]), final_library);
  });
  for (std::size_t i = 0; i < ids.size(); ++i) {
    r.original_outcomes[ids[i]] = before[i];
    r.final_outcomes[ids[i]] = after[i];
  }

  const scoring::ScoringContext base_ctx{&services.gateway, cfg.tokenizer, ""};
  r.baseline_card = scoring::score_candidate(Candidate("", originals), base_ctx);
  if (r.baseline_card.note.empty()) {
    r.baseline_card.loss = Loss::finite(scoring::metric_value(r.baseline_card, cfg.metric));
  }
  const std::string seed_text = seed_library.text();
  const scoring::ScoringContext final_ctx{&services.gateway, cfg.tokenizer, seed_text.empty() ? "" : seed_text + "\n\n"};
  const Candidate final_candidate(r.library.text_from(seed_library.preamble().size(), seed_library.entries().size()),
                                  r.rewritten);
  r.final_card = scoring::score_candidate(final_candidate, final_ctx);
  scoring::Baseline baseline{r.original_outcomes, r.baseline_card};
  r.final_card.loss = scoring::gated_loss(final_candidate, r.final_card, baseline, r.final_outcomes, cfg.metric);
  return r;
}

RunResult run_parallel(const Task& task, const RunConfig& cfg, Services services, const LibraryState& seed_library) {
  RunConfig c = cfg;
  c.mode = Mode::parallel;
  const auto descriptions = describe_units(task, services.gateway);
  return run(task, plan_clusters(task, descriptions, c, services.gateway), descriptions, c, services, seed_library);
}

RunResult run_incremental(const Task& task, const RunConfig& cfg, Services services, const LibraryState& seed_library) {
  RunConfig c = cfg;
  c.mode = Mode::incremental;
  const auto descriptions = describe_units(task, services.gateway);
  return run(task, plan_clusters(task, descriptions, c, services.gateway), descriptions, c, services, seed_library);
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
  if (!out) throw Error("cannot write " + p.string());
}

void write_json(const fs::path& p, const Json& j) { write_text(p, j.dump(2) + "\n"); }

std::string padded(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

// Relative path for a unit id under rewritten/; unsafe ids are flattened.
std::string unit_path(const std::string& id) {
  const fs::path p(id);
  bool safe = !id.empty() && p.is_relative();
  for (const auto& part : p) {
    if (part == ".." || part == "." || part.empty()) safe = false;
  }
  if (safe) return p.generic_string();
  std::string flat;
  for (char c : id) flat += std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-' ? c : '_';
  return flat + "." + sha256_hex(id).substr(0, 8);
}

Json outcomes_json(const std::map<std::string, TestOutcome>& outcomes) {
  Json j = Json::object();
  for (const auto& [id, o] : outcomes) j[id] = o;
  return j;
}

}  // namespace

void write_run(const fs::path& dir, const Task& task, const RunConfig& cfg, const RunResult& r) {
  fs::create_directories(dir);
  fs::remove(dir / "run.json");

  Json tags = Json::object();
  for (const auto& [id, t] : task.tags) tags[id] = t;
  Json plan = r.plan;
  plan["descriptions"] = r.descriptions;
  plan["tags"] = tags;
  write_json(dir / "clusters" / "plan.json", plan);

  for (const auto& c : r.clusters) {
    const fs::path cdir = dir / "clusters" / padded(c.index);
    write_text(cdir / "prompt.txt", c.prompt);
    Json res{{"index", c.index},
             {"units", c.unit_ids},
             {"retrieved", c.retrieved},
             {"keep_originals", c.keep_originals},
             {"selected", c.keep_originals ? Json(nullptr) : Json(c.selected)},
             {"protocol_errors", c.protocol_errors},
             {"parse_errors", c.parse_errors},
             {"samples", c.samples.size()},
             {"delta_library", c.delta_library},
             {"rewritten", c.rewritten},
             {"baseline", {{"card", c.baseline.card}, {"outcomes", outcomes_json(c.baseline.outcomes)}}}};
    write_json(cdir / "result.json", res);
    for (const auto& s : c.samples) {
      const fs::path sdir = cdir / "samples" / std::to_string(s.index);
      write_text(sdir / "completion.txt", s.completion);
      if (s.candidate) write_json(sdir / "candidate.json", *s.candidate);
      Json card{{"card", s.card}, {"outcomes", outcomes_json(s.outcomes)}};
      if (!s.error_kind.empty()) card["error"] = {{"kind", s.error_kind}, {"message", s.error}};
      write_json(sdir / "scorecard.json", card);
    }
  }

  write_text(dir / "library" / "codebank.py", r.library.text());
  write_json(dir / "library" / "state.json", r.library);
  Json history = Json::array();
  for (const auto& h : r.history) {
    Json names = Json::array();
    for (const auto& e : h.entries()) names.push_back(e.name);
    history.push_back({{"revision", h.revision()}, {"entries", names}});
  }
  write_json(dir / "library" / "history.json", history);

  Json files = Json::object();
  for (const auto& [id, src] : r.rewritten) {
    const std::string rel = "rewritten/" + unit_path(id);
    write_text(dir / rel, src);
    files[id] = rel;
  }
  write_json(dir / "final.json", {{"metric", scoring::to_string(cfg.metric)},
                                  {"baseline_card", r.baseline_card},
                                  {"final_card", r.final_card},
                                  {"original_outcomes", outcomes_json(r.original_outcomes)},
                                  {"final_outcomes", outcomes_json(r.final_outcomes)},
                                  {"library", "library/codebank.py"},
                                  {"rewritten", files}});

  Json config = cfg;
  write_json(dir / "run.json", {{"status", "complete"},
                                {"task", task.name},
                                {"units", task.units.size()},
                                {"clusters", r.clusters.size()},
                                {"config", config}});
}

LibraryState load_library(const fs::path& run_dir) {
  std::ifstream in(run_dir / "library" / "state.json", std::ios::binary);
  if (!in) throw IncompleteRun("no library/state.json in " + run_dir.string());
  try {
    return Json::parse(in).get<LibraryState>();
  } catch (const Json::exception& e) {
    throw IncompleteRun("library/state.json: " + std::string(e.what()));
  }
}

}  // namespace librarian::pipeline
