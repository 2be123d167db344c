#include <httplib.h>

#include <cmath>

#include "librarian/errors.hpp"
#include "stub.hpp"

namespace librarian::gateway {

namespace {

// OpenAI-compatible completions and embeddings over HTTP(S).
class HttpBackend final : public Backend {
 public:
  HttpBackend(const std::string& endpoint, const GatewayConfig& cfg) : api_key_(cfg.api_key) {
    auto scheme_end = endpoint.find("://");
    auto path_start = endpoint.find('/', scheme_end + 3);
    origin_ = endpoint.substr(0, path_start);
    base_path_ = path_start == std::string::npos ? "" : endpoint.substr(path_start);
    while (base_path_.ends_with('/')) base_path_.pop_back();
    timeout_s_ = cfg.request_timeout_s;
    max_tokens_ = cfg.max_tokens;
  }

  Json call(const std::string& operation, const Json& request) override {
    if (operation == "complete") return complete(request);
    if (operation == "score") return score(request);
    if (operation == "embed") return embed(request);
    throw Error("http: unknown operation " + operation);
  }

 private:
  std::string origin_;
  std::string base_path_;
  std::string api_key_;
  double timeout_s_ = 120.0;
  std::int64_t max_tokens_ = 4096;

  Json post(const std::string& path, const Json& body, bool scoring = false) {
    httplib::Client client(origin_);
    const auto secs = static_cast<time_t>(timeout_s_);
    const auto usecs = static_cast<time_t>((timeout_s_ - std::floor(timeout_s_)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(base_path_ + path, headers, body.dump(), "application/json");
    if (!res) throw EndpointUnavailable(origin_ + base_path_ + path + ": " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500) {
      throw EndpointUnavailable(origin_ + base_path_ + path + ": HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
      if (scoring && (res->body.find("context") != std::string::npos)) {
        throw ContextOverflow("scorer rejected prompt: " + res->body.substr(0, 200));
      }
      throw Error(origin_ + base_path_ + path + ": HTTP " + std::to_string(res->status) + ": " +
                  res->body.substr(0, 200));
    }
    try {
      return Json::parse(res->body);
    } catch (const Json::exception& e) {
      throw EndpointUnavailable(std::string("malformed response: ") + e.what());
    }
  }

  Json complete(const Json& request) {
    Json body{{"model", request.at("model")},
              {"prompt", request.at("prompt")},
              {"temperature", request.at("temperature")},
              {"max_tokens", request.at("max_tokens")},
              {"seed", request.at("seed")},
              {"n", 1}};
    Json r = post("/completions", body);
    try {
      return Json{{"text", r.at("choices").at(0).at("text")}};
    } catch (const Json::exception& e) {
      throw EndpointUnavailable(std::string("unexpected completion response: ") + e.what());
    }
  }

  // Echo scoring: the prompt's own tokens come back with their log-probabilities.
  Json score(const Json& request) {
    const std::string prefix = request.at("prefix");
    const std::string suffix = request.at("suffix");
    Json body{{"model", request.at("model")},
              {"prompt", prefix + suffix},
              {"max_tokens", 0},
              {"echo", true},
              {"logprobs", 0},
              {"temperature", 0}};
    Json r = post("/completions", body, true);
    try {
      const Json& lp = r.at("choices").at(0).at("logprobs");
      std::vector<std::string> tokens = lp.at("tokens");
      std::vector<std::size_t> offsets = lp.at("text_offset");
      std::vector<double> logprobs;
      for (const auto& v : lp.at("token_logprobs")) logprobs.push_back(v.is_null() ? 0.0 : v.get<double>());
      std::vector<std::int64_t> ids;
      if (lp.contains("token_ids")) {
        ids = lp["token_ids"].get<std::vector<std::int64_t>>();
      } else {
        ids.assign(tokens.size(), -1);
      }
      std::size_t boundary = tokens.size();
      for (std::size_t i = 0; i < offsets.size(); ++i) {
        if (offsets[i] >= prefix.size()) {
          boundary = i;
          break;
        }
      }
      return Json{{"token_ids", ids}, {"tokens", tokens}, {"token_logprobs", logprobs}, {"prompt_boundary", boundary}};
    } catch (const Json::exception& e) {
      throw EndpointUnavailable(std::string("unexpected scoring response: ") + e.what());
    }
  }

  Json embed(const Json& request) {
    Json r = post("/embeddings", Json{{"model", request.at("model")}, {"input", request.at("input")}});
    try {
      Json vectors = Json::array();
      for (const auto& d : r.at("data")) vectors.push_back(d.at("embedding"));
      return Json{{"vectors", vectors}};
    } catch (const Json::exception& e) {
      throw EndpointUnavailable(std::string("unexpected embedding response: ") + e.what());
    }
  }
};

}  // namespace

std::unique_ptr<Backend> make_http_backend(const std::string& endpoint, const GatewayConfig& cfg) {
  return std::make_unique<HttpBackend>(endpoint, cfg);
}

}  // namespace librarian::gateway
