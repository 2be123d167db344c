#include "librarian/model.hpp"

#include <fstream>
#include <sstream>

#include "librarian/digest.hpp"
#include "librarian/errors.hpp"

namespace librarian {

const SourceUnit* Task::find_unit(const std::string& id) const {
  for (const auto& u : units) {
    if (u.id == id) return &u;
  }
  return nullptr;
}

Candidate::Candidate(std::string library, std::map<std::string, std::string> rewritten,
                     Provenance provenance)
    : digest_(candidate_digest(library, rewritten)),
      library_(std::move(library)),
      rewritten_(std::move(rewritten)),
      provenance_(std::move(provenance)) {}

std::string to_string(FailureKind kind) {
  switch (kind) {
    case FailureKind::assertion: return "assertion";
    case FailureKind::crash: return "crash";
    case FailureKind::timeout: return "timeout";
  }
  return "crash";
}

FailureKind failure_kind_from_string(const std::string& s) {
  if (s == "assertion") return FailureKind::assertion;
  if (s == "crash") return FailureKind::crash;
  if (s == "timeout") return FailureKind::timeout;
  throw BackendProtocolError("unknown failure kind: " + s);
}

std::vector<std::string> validate_task(const Task& task) {
  std::vector<std::string> out;
  if (task.units.empty()) out.emplace_back("task has no units");
  std::set<std::string> seen;
  for (const auto& u : task.units) {
    if (u.id.empty()) out.emplace_back("unit with empty id");
    if (!seen.insert(u.id).second) out.push_back("duplicate id: " + u.id);
    if (u.code.empty()) out.push_back("unit " + u.id + ": empty code");
    if (!task.test_registry.contains(u.test_ref)) {
      out.push_back("unit " + u.id + ": unknown test_ref '" + u.test_ref + "'");
    }
  }
  for (const auto& [id, suite] : task.test_registry) {
    if (suite.backend != "mock" && suite.backend != "subprocess") {
      out.push_back("suite " + id + ": unknown backend '" + suite.backend + "'");
    }
  }
  for (const auto& [id, tags] : task.tags) {
    if (!seen.contains(id)) out.push_back("tags: unknown unit '" + id + "'");
  }
  return out;
}

void to_json(Json& j, const SourceUnit& u) {
  j = Json{{"id", u.id}, {"code", u.code}, {"test_ref", u.test_ref}};
  j["description"] = u.description ? Json(*u.description) : Json(nullptr);
}

void from_json(const Json& j, SourceUnit& u) {
  j.at("id").get_to(u.id);
  u.code = j.value("code", std::string{});
  j.at("test_ref").get_to(u.test_ref);
  if (auto it = j.find("description"); it != j.end() && !it->is_null()) {
    u.description = it->get<std::string>();
  } else {
    u.description.reset();
  }
}

void to_json(Json& j, const TestSuite& s) {
  j = Json{{"backend", s.backend}, {"tests", s.tests}, {"path", s.path.generic_string()}};
}

void from_json(const Json& j, TestSuite& s) {
  s.backend = j.value("backend", std::string("mock"));
  s.tests = j.value("tests", std::vector<std::string>{});
  s.path = j.value("path", std::string{});
}

void to_json(Json& j, const Task& t) {
  j = Json{{"name", t.name}, {"units", t.units}, {"test_registry", t.test_registry}};
  Json tags = Json::object();
  for (const auto& [id, set] : t.tags) tags[id] = std::vector<std::string>(set.begin(), set.end());
  j["tags"] = tags;
}

void from_json(const Json& j, Task& t) {
  j.at("name").get_to(t.name);
  j.at("units").get_to(t.units);
  t.test_registry = j.value("test_registry", std::map<std::string, TestSuite>{});
  t.tags.clear();
  if (auto it = j.find("tags"); it != j.end() && it->is_object()) {
    for (const auto& [id, list] : it->items()) {
      auto v = list.get<std::vector<std::string>>();
      t.tags[id] = std::set<std::string>(v.begin(), v.end());
    }
  }
}

void to_json(Json& j, const Provenance& p) {
  j = Json{{"model", p.model},
           {"temperature", p.temperature},
           {"sample_index", p.sample_index},
           {"prompt_hash", p.prompt_hash}};
}

void from_json(const Json& j, Provenance& p) {
  p.model = j.value("model", std::string{});
  p.temperature = j.value("temperature", 0.0);
  p.sample_index = j.value("sample_index", std::int64_t{0});
  p.prompt_hash = j.value("prompt_hash", std::string{});
}

void to_json(Json& j, const Candidate& c) {
  j = Json{{"digest", c.digest()},
           {"library", c.library()},
           {"rewritten", c.rewritten()},
           {"provenance", c.provenance()}};
}

Candidate candidate_from_json(const Json& j) {
  Candidate c(j.at("library").get<std::string>(),
              j.at("rewritten").get<std::map<std::string, std::string>>(),
              j.value("provenance", Json::object()).get<Provenance>());
  if (auto it = j.find("digest"); it != j.end() && it->get<std::string>() != c.digest()) {
    throw InvalidCandidate("candidate digest does not match its content");
  }
  return c;
}

void to_json(Json& j, const TestOutcome& o) {
  Json errored = Json::array();
  for (const auto& [id, kind] : o.errored) errored.push_back({{"id", id}, {"kind", to_string(kind)}});
  j = Json{{"unit_id", o.unit_id},
           {"passed", std::vector<std::string>(o.passed.begin(), o.passed.end())},
           {"failed", std::vector<std::string>(o.failed.begin(), o.failed.end())},
           {"errored", errored}};
}

void from_json(const Json& j, TestOutcome& o) {
  o.unit_id = j.value("unit_id", std::string{});
  auto passed = j.at("passed").get<std::vector<std::string>>();
  auto failed = j.at("failed").get<std::vector<std::string>>();
  o.passed = {passed.begin(), passed.end()};
  o.failed = {failed.begin(), failed.end()};
  o.errored.clear();
  for (const auto& e : j.at("errored")) {
    o.errored[e.at("id").get<std::string>()] = failure_kind_from_string(e.at("kind").get<std::string>());
  }
}

void to_json(Json& j, const Loss& l) {
  if (l.is_finite()) {
    j = Json{{"kind", "finite"}, {"value", l.value()}};
  } else {
    j = Json{{"kind", "infeasible"}};
  }
}

Loss loss_from_json(const Json& j) {
  if (j.at("kind").get<std::string>() == "finite") return Loss::finite(j.at("value").get<double>());
  return Loss::infeasible();
}

void to_json(Json& j, const ScoreCard& s) {
  j = Json{{"tokens", s.tokens},
           {"mdl_nats", s.mdl_nats},
           {"cc", s.cc},
           {"mi_neg", s.mi_neg},
           {"loss", s.loss},
           {"note", s.note}};
}

void from_json(const Json& j, ScoreCard& s) {
  j.at("tokens").get_to(s.tokens);
  j.at("mdl_nats").get_to(s.mdl_nats);
  j.at("cc").get_to(s.cc);
  j.at("mi_neg").get_to(s.mi_neg);
  s.loss = loss_from_json(j.at("loss"));
  s.note = j.value("note", std::string{});
}

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InvalidTask("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Task load_task(const std::filesystem::path& dir) {
  Json j;
  try {
    j = Json::parse(read_file(dir / "task.json"));
  } catch (const Json::exception& e) {
    throw InvalidTask(std::string("task.json: ") + e.what());
  }
  Task task;
  try {
    task.name = j.at("name").get<std::string>();
    for (const auto& ju : j.at("units")) {
      SourceUnit u = ju.get<SourceUnit>();
      if (auto it = ju.find("path"); it != ju.end()) u.code = read_file(dir / it->get<std::string>());
      task.units.push_back(std::move(u));
    }
    Task partial = j.get<Task>();
    task.test_registry = std::move(partial.test_registry);
    task.tags = std::move(partial.tags);
  } catch (const Json::exception& e) {
    throw InvalidTask(std::string("task.json: ") + e.what());
  }
  for (auto& [id, suite] : task.test_registry) {
    if (!suite.path.empty() && suite.path.is_relative()) suite.path = dir / suite.path;
  }
  return task;
}

}  // namespace librarian
