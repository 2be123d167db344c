#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"
#include "librarian/code/tokenizer.hpp"
#include "librarian/errors.hpp"
#include "librarian/gateway.hpp"
#include "librarian/protocol.hpp"

using namespace librarian;
using namespace librarian::gateway;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("librarian_gw_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string refactor_prompt() {
  std::string p = "Refactor.\n\n";
  p += std::string(protocol::kOriginalsMarker) + "\n";
  p += protocol::program_marker("u1") + "\n#: adds numbers\nprint(1 + 2)\n\n";
  p += protocol::program_marker("u2") + "\nx = 3\nprint(x)\n\n";
  p += std::string(protocol::kEndMarker) + "\n";
  return p;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("prompt programs round trip through the markers") {
  auto programs = protocol::extract_prompt_programs(refactor_prompt());
  REQUIRE(programs.size() == 2);
  CHECK(programs[0].id == "u1");
  CHECK(programs[0].description == "adds numbers");
  CHECK(programs[0].code == "print(1 + 2)\n");
  CHECK(programs[1].code == "x = 3\nprint(x)\n");
  CHECK(protocol::extract_prompt_programs("no programs here").empty());
  std::string id;
  CHECK(protocol::parse_program_marker("# ########## PROGRAM: node_16:cc_python_16 ##########", id));
  CHECK(id == "node_16:cc_python_16");
  CHECK_FALSE(protocol::parse_program_marker("# ########## PROGRAM:  ##########", id));
}

TEST_CASE("echo stub samples distinct deterministic completions") {
  Gateway gw(GatewayConfig{});
  auto a = gw.sample(refactor_prompt(), 3, 5);
  auto b = gw.sample(refactor_prompt(), 3, 5);
  REQUIRE(a.size() == 3);
  CHECK(a[0].text != a[1].text);
  CHECK(a[1].text != a[2].text);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i].text == b[i].text);
    CHECK(a[i].provenance.sample_index == static_cast<std::int64_t>(i));
    CHECK(a[i].text.find("# ########## PROGRAM: u2 ##########\nx = 3\nprint(x)\n") != std::string::npos);
  }
  CHECK_THROWS_AS(gw.sample("x", 0), Error);
}

TEST_CASE("empty stub returns empty completions") {
  GatewayConfig cfg;
  cfg.sampler_endpoint = "stub:empty";
  Gateway gw(cfg);
  for (const auto& c : gw.sample(refactor_prompt(), 2)) CHECK(c.text.empty());
}

TEST_CASE("scripted stub picks completions by program set") {
  auto dir = fresh_dir("scripted");
  std::ofstream(dir / "second.txt") << "FROM FILE";
  std::ofstream(dir / "script.json") << R"({
    "clusters": [{"units": ["u2", "u1"], "completions": ["FIRST", {"file": "second.txt"}]}],
    "summaries": {"u9": "custom summary"}
  })";
  GatewayConfig cfg;
  cfg.sampler_endpoint = "stub:scripted:" + (dir / "script.json").string();
  Gateway gw(cfg);
  auto c = gw.sample(refactor_prompt(), 3);
  CHECK(c[0].text == "FIRST");
  CHECK(c[1].text == "FROM FILE");
  CHECK(c[2].text == "FIRST");
  CHECK(gw.sample("Summarise.\n" + protocol::program_marker("u9") + "\nx = 1\n", 1)[0].text == "custom summary");
  fs::remove_all(dir);
}

TEST_CASE("uniform stub charges ln 2 per token") {
  GatewayConfig cfg;
  cfg.scorer_endpoint = "stub:uniform";
  Gateway gw(cfg);
  const std::string suffix = "def f(x):\n    return x + 1\n";
  auto s = gw.score_suffix("import os\n", suffix);
  const auto t = code::count_tokens(suffix);
  CHECK(s.suffix_nats() == doctest::Approx(static_cast<double>(t) * std::numbers::ln2));
  CHECK(s.prompt_boundary == code::count_tokens("import os\n"));
  CHECK(gw.score_suffix("abc", "").suffix_nats() == 0.0);
  double total = 0;
  for (std::size_t i = s.prompt_boundary; i < s.token_logprobs.size(); ++i) {
    CHECK(s.token_logprobs[i] <= 0.0);
    total += s.token_logprobs[i];
  }
  CHECK(total == s.suffix_logprob());
}

TEST_CASE("vocab-aware stub matches a hand computation") {
  Gateway gw(GatewayConfig{});
  // total | " =" | " z" | q | newline: single letters are not common.
  auto s = gw.score_suffix("", "total = zq\n");
  CHECK(s.tokens == std::vector<std::string>{"total", " =", " z", "q", "\n"});
  CHECK(s.suffix_nats() == doctest::Approx((1 + 1 + 5 + 5 + 1) * std::numbers::ln2));
}

TEST_CASE("context overflow is reported before scoring") {
  GatewayConfig cfg;
  cfg.context_tokens = 4;
  Gateway gw(cfg);
  CHECK_THROWS_AS(gw.score_suffix("a b c", "d e f g"), ContextOverflow);
}

TEST_CASE("bag-of-words embeddings") {
  Gateway gw(GatewayConfig{});
  auto v = gw.embed({"alpha", "alpha", "sort integers fast", "sort integers quickly", "graph shortest path", ""});
  REQUIRE(v.size() == 6);
  for (const auto& x : v) CHECK(dot(x, x) == doctest::Approx(1.0));
  CHECK(dot(v[0], v[1]) == doctest::Approx(1.0));
  CHECK(dot(v[2], v[3]) > dot(v[2], v[4]));
  CHECK_THROWS_AS(gw.embed({}), Error);
}

TEST_CASE("stub profiles reject unsupported operations") {
  GatewayConfig cfg;
  cfg.scorer_endpoint = "stub:echo";
  cfg.max_retries = 0;
  Gateway gw(cfg);
  CHECK_THROWS_AS(gw.score_suffix("", "x"), EndpointUnavailable);
  cfg.sampler_endpoint = "stub:nonsense";
  CHECK_THROWS_AS(Gateway{cfg}, Error);
  cfg.sampler_endpoint = "ftp://example";
  CHECK_THROWS_AS(Gateway{cfg}, Error);
}

TEST_CASE("content-addressed cache") {
  auto dir = fresh_dir("cache");
  GatewayConfig cfg;
  cfg.cache_dir = dir;
  {
    Gateway gw(cfg);
    auto first = gw.sample(refactor_prompt(), 2);
    auto second = gw.sample(refactor_prompt(), 2);
    CHECK(first[0].text == second[0].text);
    CHECK(gw.stats().requests == 2);
    CHECK(gw.stats().cache_hits == 2);
  }
  SUBCASE("keys depend on endpoint, model and body") {
    Json body{{"a", 1}};
    auto k = Gateway::cache_key("stub:echo", "m", "complete", body);
    CHECK(k != Gateway::cache_key("stub:empty", "m", "complete", body));
    CHECK(k != Gateway::cache_key("stub:echo", "m2", "complete", body));
    CHECK(k != Gateway::cache_key("stub:echo", "m", "complete", Json{{"a", 2}}));
  }
  SUBCASE("write-once") {
    ResponseCache cache(dir);
    cache.put("abcd", Json{{"text", "one"}});
    cache.put("abcd", Json{{"text", "two"}});
    CHECK(cache.get("abcd")->at("text") == "one");
    CHECK_FALSE(cache.get("ffff").has_value());
  }
  SUBCASE("corruption is detected") {
    ResponseCache cache(dir);
    cache.put("beef", Json{{"text", "hello"}});
    auto p = cache.entry_path("beef");
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    text.replace(text.find("hello"), 5, "jello");
    std::ofstream(p, std::ios::trunc) << text;
    CHECK_THROWS_AS(cache.get("beef"), CacheCorruption);
  }
  fs::remove_all(dir);
}

TEST_CASE("request budget") {
  GatewayConfig cfg;
  cfg.max_requests = 2;
  Gateway gw(cfg);
  gw.sample(refactor_prompt(), 2);
  CHECK_THROWS_AS(gw.sample(refactor_prompt(), 1, 99), BudgetExceeded);
}

TEST_CASE("gateway config json") {
  GatewayConfig cfg;
  cfg.temperature = 0.3;
  cfg.cache_dir = "/tmp/x";
  cfg.api_key = "secret";
  Json j = cfg;
  CHECK_FALSE(j.contains("api_key"));
  GatewayConfig back = j.get<GatewayConfig>();
  cfg.api_key.clear();
  CHECK(back == cfg);
}

TEST_CASE("http backend speaks the completions protocol") {
  httplib::Server server;
  std::atomic<int> failures_left{1};
  server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (failures_left-- > 0) {
      res.status = 503;
      return;
    }
    Json body = Json::parse(req.body);
    CHECK(req.get_header_value("Authorization") == "Bearer k");
    if (body.value("echo", false)) {
      // Three tokens: "ab" | "c" | "d" over prompt "abcd" with prefix "ab".
      res.set_content(Json{{"choices", {{{"logprobs", {{"tokens", {"ab", "c", "d"}},
                                                        {"text_offset", {0, 2, 3}},
                                                        {"token_logprobs", {nullptr, -0.5, -0.25}}}}}}}}.dump(),
                      "application/json");
    } else {
      res.set_content(Json{{"choices", {{{"text", "completion " + body["prompt"].get<std::string>()}}}}}.dump(),
                      "application/json");
    }
  });
  server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    Json body = Json::parse(req.body);
    Json data = Json::array();
    for (std::size_t i = 0; i < body["input"].size(); ++i) data.push_back({{"embedding", {3.0, 4.0}}});
    res.set_content(Json{{"data", data}}.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  GatewayConfig cfg;
  const std::string url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.sampler_endpoint = cfg.scorer_endpoint = cfg.embedder_endpoint = url;
  cfg.api_key = "k";
  cfg.retry_backoff_s = 0.01;
  cfg.tokenizer = "fallback";
  Gateway gw(cfg);
  auto c = gw.sample("hi", 1);
  CHECK(c[0].text == "completion hi");
  CHECK(gw.stats().retries == 1);
  auto s = gw.score_suffix("ab", "cd");
  CHECK(s.prompt_boundary == 1);
  CHECK(s.suffix_nats() == doctest::Approx(0.75));
  auto v = gw.embed({"x"});
  CHECK(v[0] == std::vector<double>{0.6, 0.8});

  server.stop();
  th.join();

  GatewayConfig down;
  down.sampler_endpoint = "http://127.0.0.1:1";
  down.max_retries = 1;
  down.retry_backoff_s = 0.01;
  down.request_timeout_s = 1.0;
  Gateway dead(down);
  CHECK_THROWS_AS(dead.sample("x", 1), EndpointUnavailable);
}
