#include "stub.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "librarian/code/lexer.hpp"
#include "librarian/code/tokenizer.hpp"
#include "librarian/digest.hpp"
#include "librarian/errors.hpp"
#include "librarian/protocol.hpp"

#ifndef LIBRARIAN_DATA_DIR
#define LIBRARIAN_DATA_DIR "data"
#endif

namespace librarian::gateway {

namespace {

constexpr std::size_t kEmbeddingDim = 64;

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::vector<double> hashed_vector(std::string_view word) {
  std::uint64_t state = fnv1a64(word);
  std::vector<double> v(kEmbeddingDim);
  for (auto& x : v) x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  return v;
}

std::vector<std::string> lower_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Distinct identifiers of the program after the last marker, in order of appearance.
std::string identifier_summary(std::string_view prompt) {
  auto pos = prompt.rfind(protocol::kProgramPrefix);
  std::string_view body = pos == std::string_view::npos ? prompt : prompt.substr(pos);
  if (auto eol = body.find('\n'); eol != std::string_view::npos) body.remove_prefix(eol + 1);
  std::vector<std::string> words;
  std::set<std::string> seen;
  try {
    for (const auto& t : code::tokenize(body)) {
      if (t.kind != code::TokenKind::name || code::is_keyword(t.text) || t.text.size() < 3) continue;
      if (seen.insert(t.text).second) words.push_back(t.text);
    }
  } catch (const ParseError&) {
    words = lower_words(body);
  }
  std::string out;
  for (std::size_t i = 0; i < words.size() && i < 64; ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

std::string echo_completion(std::string_view prompt, std::int64_t index) {
  auto programs = protocol::extract_prompt_programs(prompt);
  if (programs.empty()) return identifier_summary(prompt);
  std::string out(protocol::kHelperMarker);
  out += "\n# variant " + sha256_hex(prompt).substr(0, 8) + "-" + std::to_string(index) + "\n\n";
  for (const auto& p : programs) {
    out += protocol::program_marker(p.id) + "\n" + p.code;
    if (!p.code.ends_with('\n')) out += '\n';
    out += '\n';
  }
  return out;
}

}  // namespace

StubBackend::StubBackend(std::string profile, const GatewayConfig& cfg) : profile_(std::move(profile)) {
  if (profile_.starts_with("scripted:")) {
    script_path_ = profile_.substr(std::string_view("scripted:").size());
    script_ = Json::parse(read_text(script_path_));
    profile_ = "scripted";
  } else if (profile_ == "vocab-aware") {
    std::filesystem::path p = cfg.common_tokens_path.empty()
                                  ? std::filesystem::path(LIBRARIAN_DATA_DIR) / "common_tokens.txt"
                                  : cfg.common_tokens_path;
    std::istringstream in(read_text(p));
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) common_.insert(line);
    }
  } else if (profile_ != "echo" && profile_ != "empty" && profile_ != "uniform" && profile_ != "bow") {
    throw Error("unknown stub profile '" + profile_ + "'");
  }
  tokenizer_ = cfg.tokenizer;
}

Json StubBackend::call(const std::string& operation, const Json& request) {
  if (operation == "complete") return complete(request);
  if (operation == "score") return score(request);
  if (operation == "embed") return embed(request);
  throw Error("stub: unknown operation " + operation);
}

Json StubBackend::complete(const Json& request) const {
  const std::string prompt = request.at("prompt");
  const std::int64_t index = request.at("sample_index");
  if (profile_ == "empty") return Json{{"text", ""}};
  if (profile_ == "echo") return Json{{"text", echo_completion(prompt, index)}};
  if (profile_ == "scripted") {
    auto programs = protocol::extract_prompt_programs(prompt);
    std::set<std::string> ids;
    for (const auto& p : programs) ids.insert(p.id);
    if (programs.empty()) {
      // Summary request: look up by the marker id.
      std::string id;
      auto pos = prompt.rfind(protocol::kProgramPrefix);
      if (pos != std::string::npos) {
        auto eol = prompt.find('\n', pos);
        protocol::parse_program_marker(std::string_view(prompt).substr(pos, eol - pos), id);
      }
      if (script_.contains("summaries") && script_["summaries"].contains(id)) {
        return Json{{"text", script_["summaries"][id]}};
      }
      return Json{{"text", identifier_summary(prompt)}};
    }
    for (const auto& entry : script_.value("clusters", Json::array())) {
      auto units = entry.at("units").get<std::set<std::string>>();
      if (units != ids) continue;
      const auto& list = entry.at("completions");
      if (list.empty()) break;
      const Json& item = list[static_cast<std::size_t>(index) % list.size()];
      if (item.is_string()) return Json{{"text", item}};
      return Json{{"text", read_text(script_path_.parent_path() / item.at("file").get<std::string>())}};
    }
    return Json{{"text", echo_completion(prompt, index)}};
  }
  throw EndpointUnavailable("stub profile '" + profile_ + "' cannot sample");
}

Json StubBackend::score(const Json& request) const {
  if (profile_ != "uniform" && profile_ != "vocab-aware") {
    throw EndpointUnavailable("stub profile '" + profile_ + "' cannot score");
  }
  auto tok = code::TokenizerRegistry::global().get(tokenizer_);
  std::vector<std::string> tokens = tok->split(request.at("prefix").get<std::string>());
  const std::size_t boundary = tokens.size();
  for (auto& t : tok->split(request.at("suffix").get<std::string>())) tokens.push_back(std::move(t));
  std::vector<std::int64_t> ids;
  std::vector<double> logprobs;
  for (const auto& t : tokens) {
    ids.push_back(static_cast<std::int64_t>(fnv1a64(t) & 0x7fffffff));
    double bits = 1.0;
    if (profile_ == "vocab-aware") {
      auto b = t.find_first_not_of(" \t\r\n\f\v");
      auto e = t.find_last_not_of(" \t\r\n\f\v");
      const bool blank = b == std::string::npos;
      bits = blank || common_.contains(t.substr(b, e - b + 1)) ? 1.0 : 5.0;
    }
    logprobs.push_back(-bits * std::numbers::ln2);
  }
  return Json{{"token_ids", ids}, {"tokens", tokens}, {"token_logprobs", logprobs}, {"prompt_boundary", boundary}};
}

Json StubBackend::embed(const Json& request) const {
  if (profile_ != "bow") throw EndpointUnavailable("stub profile '" + profile_ + "' cannot embed");
  Json vectors = Json::array();
  for (const auto& text : request.at("input")) {
    const std::string s = text.get<std::string>();
    std::vector<double> sum(kEmbeddingDim, 0.0);
    auto words = lower_words(s);
    if (words.empty()) words.push_back("\x01" + s);
    for (const auto& w : words) {
      auto v = hashed_vector(w);
      for (std::size_t i = 0; i < kEmbeddingDim; ++i) sum[i] += v[i];
    }
    double norm = 0.0;
    for (double x : sum) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : sum) x /= norm;
    vectors.push_back(sum);
  }
  return Json{{"vectors", vectors}};
}

std::unique_ptr<Backend> make_backend(const std::string& endpoint, const GatewayConfig& cfg) {
  if (endpoint.starts_with("stub:")) return std::make_unique<StubBackend>(endpoint.substr(5), cfg);
  if (endpoint.starts_with("http://") || endpoint.starts_with("https://")) return make_http_backend(endpoint, cfg);
  throw Error("unsupported endpoint '" + endpoint + "'");
}

}  // namespace librarian::gateway
