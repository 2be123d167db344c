#include "librarian/harness.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "librarian/errors.hpp"
#include "librarian/protocol.hpp"

#ifndef LIBRARIAN_DATA_DIR
#define LIBRARIAN_DATA_DIR "data"
#endif

namespace librarian::harness {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw WorkspaceError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw WorkspaceError("cannot write " + p.string());
}

// Removes the workspace on scope exit unless asked to keep it.
class Workspace {
 public:
  Workspace(const fs::path& root, bool keep) : keep_(keep) {
    std::error_code ec;
    fs::create_directories(root, ec);
    std::string tmpl = (root / "librarian-ws-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) {
      throw WorkspaceError("mkdtemp in " + root.string() + ": " + std::strerror(errno));
    }
    path_ = tmpl;
  }
  ~Workspace() {
    if (keep_) return;
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  bool keep_;
};

void record(TestOutcome& o, const std::string& test, const std::string& verdict) {
  if (verdict == "pass") {
    o.passed.insert(test);
  } else if (verdict == "fail" || verdict == "assertion") {
    o.failed.insert(test);
  } else if (verdict == "crash" || verdict == "error") {
    o.errored[test] = FailureKind::crash;
  } else if (verdict == "timeout") {
    o.errored[test] = FailureKind::timeout;
  } else {
    throw BackendProtocolError("unknown mock verdict '" + verdict + "' for test " + test);
  }
}

bool rule_matches(const Json& rule, const std::string& code, const std::string& library) {
  bool any = false;
  if (auto it = rule.find("contains"); it != rule.end()) {
    any = true;
    if (code.find(it->get<std::string>()) == std::string::npos) return false;
  }
  if (auto it = rule.find("library_contains"); it != rule.end()) {
    any = true;
    if (library.find(it->get<std::string>()) == std::string::npos) return false;
  }
  if (auto it = rule.find("not_contains"); it != rule.end()) {
    any = true;
    if (code.find(it->get<std::string>()) != std::string::npos) return false;
  }
  if (auto it = rule.find("library_not_contains"); it != rule.end()) {
    any = true;
    if (library.find(it->get<std::string>()) != std::string::npos) return false;
  }
  return any;
}

}  // namespace

fs::path outcome_schema_path() { return fs::path(LIBRARIAN_DATA_DIR) / "outcome.schema.json"; }

TestOutcome parse_outcome_document(const Json& doc, const std::string& unit_id) {
  if (!doc.is_object()) throw BackendProtocolError("outcome.json: expected an object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "passed" && key != "failed" && key != "errored" && key != "schema_version") {
      throw BackendProtocolError("outcome.json: unexpected field '" + key + "'");
    }
  }
  if (doc.contains("schema_version") && doc["schema_version"] != 1) {
    throw BackendProtocolError("outcome.json: unsupported schema_version");
  }
  TestOutcome o;
  o.unit_id = unit_id;
  auto ids = [&](const char* field, std::set<std::string>& out) {
    auto it = doc.find(field);
    if (it == doc.end() || !it->is_array()) throw BackendProtocolError(std::string("outcome.json: '") + field + "' must be an array");
    for (const auto& v : *it) {
      if (!v.is_string() || v.get<std::string>().empty()) {
        throw BackendProtocolError(std::string("outcome.json: '") + field + "' holds a non-string id");
      }
      if (!out.insert(v.get<std::string>()).second) {
        throw BackendProtocolError("outcome.json: duplicate id " + v.get<std::string>());
      }
    }
  };
  ids("passed", o.passed);
  ids("failed", o.failed);
  auto err = doc.find("errored");
  if (err == doc.end() || !err->is_array()) throw BackendProtocolError("outcome.json: 'errored' must be an array");
  for (const auto& e : *err) {
    if (!e.is_object() || e.size() != 2 || !e.contains("id") || !e.contains("kind") || !e["id"].is_string() ||
        !e["kind"].is_string() || e["id"].get<std::string>().empty()) {
      throw BackendProtocolError("outcome.json: malformed errored entry");
    }
    const std::string id = e["id"];
    if (!o.errored.emplace(id, failure_kind_from_string(e["kind"])).second) {
      throw BackendProtocolError("outcome.json: duplicate id " + id);
    }
  }
  for (const auto& id : o.passed) {
    if (o.failed.contains(id) || o.errored.contains(id)) throw BackendProtocolError("outcome.json: " + id + " listed twice");
  }
  for (const auto& id : o.failed) {
    if (o.errored.contains(id)) throw BackendProtocolError("outcome.json: " + id + " listed twice");
  }
  return o;
}

bool pass_gate(const TestOutcome& original, const TestOutcome& candidate) {
  if (original.unit_id != candidate.unit_id) {
    throw UnitMismatch("pass_gate: '" + original.unit_id + "' vs '" + candidate.unit_id + "'");
  }
  for (const auto& t : original.passed) {
    if (!candidate.passed.contains(t)) return false;
  }
  return true;
}

Harness::Harness(const Task& task, HarnessConfig cfg)
    : task_(task),
      cfg_(std::move(cfg)),
      slots_(std::make_unique<std::counting_semaphore<256>>(
          static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(cfg_.max_processes, 1, 256)))) {}

Harness::~Harness() = default;

TestOutcome Harness::run_suite(const std::string& unit_id, const std::string& code, const std::string& library) const {
  const SourceUnit* unit = task_.find_unit(unit_id);
  if (!unit) throw InvalidTask("unknown unit '" + unit_id + "'");
  auto it = task_.test_registry.find(unit->test_ref);
  if (it == task_.test_registry.end()) throw InvalidTask("unit " + unit_id + ": unknown test_ref '" + unit->test_ref + "'");
  if (it->second.backend == "mock") return run_mock(*unit, it->second, code, library);
  if (it->second.backend == "subprocess") return run_subprocess(*unit, it->second, code, library);
  throw InvalidTask("suite " + unit->test_ref + ": unknown backend '" + it->second.backend + "'");
}

TestOutcome Harness::run_mock(const SourceUnit& unit, const TestSuite& suite, const std::string& code,
                              const std::string& library) const {
  Json manifest;
  try {
    manifest = Json::parse(read_file(suite.path));
  } catch (const Json::exception& e) {
    throw BackendProtocolError("mock manifest " + suite.path.string() + ": " + e.what());
  }
  std::map<std::string, std::string> verdicts = manifest.value("default", std::map<std::string, std::string>{});
  for (const auto& rule : manifest.value("rules", Json::array())) {
    if (rule_matches(rule, code, library)) {
      for (const auto& [test, verdict] : rule.at("outcomes").items()) verdicts[test] = verdict.get<std::string>();
      break;
    }
  }
  TestOutcome o;
  o.unit_id = unit.id;
  std::vector<std::string> tests = suite.tests;
  if (tests.empty()) {
    for (const auto& [t, v] : verdicts) tests.push_back(t);
  }
  for (const auto& t : tests) {
    auto v = verdicts.find(t);
    if (v == verdicts.end()) throw BackendProtocolError("mock manifest has no verdict for test " + t);
    record(o, t, v->second);
  }
  return o;
}

TestOutcome Harness::run_subprocess(const SourceUnit& unit, const TestSuite& suite, const std::string& code,
                                    const std::string& library) const {
  if (cfg_.shim_command.empty()) throw WorkspaceError("subprocess backend needs a shim command");
  slots_->acquire();
  struct Release {
    std::counting_semaphore<256>& s;
    ~Release() { s.release(); }
  } release{*slots_};

  Workspace ws(cfg_.work_root, cfg_.keep_workspaces);
  write_file(ws.path() / (std::string(protocol::kLibraryModule) + ".py"), library);
  write_file(ws.path() / "program.py", code);
  std::error_code ec;
  if (!suite.path.empty()) {
    fs::copy(suite.path, ws.path() / "tests", fs::copy_options::recursive, ec);
    if (ec) throw WorkspaceError("copying tests from " + suite.path.string() + ": " + ec.message());
  }

  const double per_test = cfg_.limits.per_test_timeout_s;
  const double suite_timeout = cfg_.limits.suite_timeout_s > 0
                                   ? cfg_.limits.suite_timeout_s
                                   : per_test * static_cast<double>(std::max<std::size_t>(suite.tests.size(), 1)) + 5.0;
  std::vector<std::string> argv_s = cfg_.shim_command;
  argv_s.push_back(ws.path().string());
  argv_s.push_back("--timeout");
  std::ostringstream t;
  t << per_test;
  argv_s.push_back(t.str());
  std::vector<char*> argv;
  for (auto& a : argv_s) argv.push_back(a.data());
  argv.push_back(nullptr);

  const std::string path_env = std::string("PATH=") + (std::getenv("PATH") ? std::getenv("PATH") : "/usr/bin:/bin");
  const std::string home_env = "HOME=" + ws.path().string();
  std::vector<std::string> env_s = {path_env, home_env, "LANG=C.UTF-8", "PYTHONDONTWRITEBYTECODE=1",
                                    "PYTHONHASHSEED=0", "TMPDIR=" + ws.path().string()};
  std::vector<char*> envp;
  for (auto& e : env_s) envp.push_back(e.data());
  envp.push_back(nullptr);
  const std::string log_path = (ws.path() / "shim.log").string();

  pid_t pid = ::fork();
  if (pid < 0) throw WorkspaceError(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    if (::chdir(ws.path().c_str()) != 0) ::_exit(126);
    int fd = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) {
      ::dup2(fd, 1);
      ::dup2(fd, 2);
      ::close(fd);
    }
    if (cfg_.limits.cpu_seconds > 0) {
      rlimit r{cfg_.limits.cpu_seconds, cfg_.limits.cpu_seconds};
      ::setrlimit(RLIMIT_CPU, &r);
    }
    if (cfg_.limits.memory_bytes > 0) {
      rlimit r{cfg_.limits.memory_bytes, cfg_.limits.memory_bytes};
      ::setrlimit(RLIMIT_AS, &r);
    }
    ::execvpe(argv[0], argv.data(), envp.data());
    ::_exit(127);
  }
  ::setpgid(pid, pid);

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(suite_timeout);
  int status = 0;
  bool timed_out = false;
  for (;;) {
    pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0 && errno != EINTR) throw WorkspaceError(std::string("waitpid: ") + std::strerror(errno));
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      timed_out = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }

  TestOutcome o;
  o.unit_id = unit.id;
  if (timed_out) {
    for (const auto& test : suite.tests) o.errored[test] = FailureKind::timeout;
    return o;
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    std::string log;
    try {
      log = read_file(log_path).substr(0, 500);
    } catch (const WorkspaceError&) {
    }
    throw BackendProtocolError("shim exited abnormally (status " + std::to_string(status) + "): " + log);
  }
  const fs::path outcome_path = ws.path() / "outcome.json";
  if (!fs::exists(outcome_path)) throw BackendProtocolError("shim wrote no outcome.json");
  Json doc;
  try {
    doc = Json::parse(read_file(outcome_path));
  } catch (const Json::exception& e) {
    throw BackendProtocolError(std::string("outcome.json: ") + e.what());
  }
  o = parse_outcome_document(doc, unit.id);
  // Registered tests the shim did not report count as crashed.
  for (const auto& test : suite.tests) {
    if (!o.passed.contains(test) && !o.failed.contains(test) && !o.errored.contains(test)) {
      o.errored[test] = FailureKind::crash;
    }
  }
  return o;
}

}  // namespace librarian::harness
