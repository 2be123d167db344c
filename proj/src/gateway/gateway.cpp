#include "librarian/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "librarian/code/tokenizer.hpp"
#include "librarian/digest.hpp"
#include "librarian/errors.hpp"

namespace librarian::gateway {

void to_json(Json& j, const GatewayConfig& c) {
  j = Json{{"sampler_endpoint", c.sampler_endpoint},
           {"scorer_endpoint", c.scorer_endpoint},
           {"embedder_endpoint", c.embedder_endpoint},
           {"sampler_model", c.sampler_model},
           {"scorer_model", c.scorer_model},
           {"embedder_model", c.embedder_model},
           {"temperature", c.temperature},
           {"max_tokens", c.max_tokens},
           {"request_timeout_s", c.request_timeout_s},
           {"cache_dir", c.cache_dir.generic_string()},
           {"context_tokens", c.context_tokens},
           {"tokenizer", c.tokenizer},
           {"common_tokens_path", c.common_tokens_path.generic_string()},
           {"max_in_flight", c.max_in_flight},
           {"requests_per_second", c.requests_per_second},
           {"max_retries", c.max_retries},
           {"retry_backoff_s", c.retry_backoff_s},
           {"max_requests", c.max_requests}};
  // The API key is never serialised.
}

void from_json(const Json& j, GatewayConfig& c) {
  GatewayConfig d;
  c.sampler_endpoint = j.value("sampler_endpoint", d.sampler_endpoint);
  c.scorer_endpoint = j.value("scorer_endpoint", d.scorer_endpoint);
  c.embedder_endpoint = j.value("embedder_endpoint", d.embedder_endpoint);
  c.sampler_model = j.value("sampler_model", d.sampler_model);
  c.scorer_model = j.value("scorer_model", d.scorer_model);
  c.embedder_model = j.value("embedder_model", d.embedder_model);
  c.temperature = j.value("temperature", d.temperature);
  c.max_tokens = j.value("max_tokens", d.max_tokens);
  c.request_timeout_s = j.value("request_timeout_s", d.request_timeout_s);
  c.cache_dir = j.value("cache_dir", std::string{});
  c.context_tokens = j.value("context_tokens", d.context_tokens);
  c.tokenizer = j.value("tokenizer", d.tokenizer);
  c.common_tokens_path = j.value("common_tokens_path", std::string{});
  c.max_in_flight = j.value("max_in_flight", d.max_in_flight);
  c.requests_per_second = j.value("requests_per_second", d.requests_per_second);
  c.max_retries = j.value("max_retries", d.max_retries);
  c.retry_backoff_s = j.value("retry_backoff_s", d.retry_backoff_s);
  c.max_requests = j.value("max_requests", d.max_requests);
}

double ScoredText::suffix_logprob() const {
  double sum = 0.0;
  for (std::size_t i = prompt_boundary; i < token_logprobs.size(); ++i) sum += token_logprobs[i];
  return sum;
}

struct Gateway::Route {
  std::string endpoint;
  std::string model;
  std::unique_ptr<Backend> backend;
  std::mutex pace_mutex;
  std::chrono::steady_clock::time_point next_slot{};
};

namespace {

std::size_t clamp_in_flight(std::size_t n) { return std::clamp<std::size_t>(n, 1, 1024); }

}  // namespace

Gateway::Gateway(GatewayConfig cfg)
    : cfg_(std::move(cfg)), in_flight_(static_cast<std::ptrdiff_t>(clamp_in_flight(cfg_.max_in_flight))) {
  auto route = [this](const std::string& endpoint, const std::string& model) {
    auto r = std::make_unique<Route>();
    r->endpoint = endpoint;
    r->model = model;
    r->backend = make_backend(endpoint, cfg_);
    return r;
  };
  sampler_ = route(cfg_.sampler_endpoint, cfg_.sampler_model);
  scorer_ = route(cfg_.scorer_endpoint, cfg_.scorer_model);
  embedder_ = route(cfg_.embedder_endpoint, cfg_.embedder_model);
  if (!cfg_.cache_dir.empty()) cache_.emplace(cfg_.cache_dir);
}

Gateway::~Gateway() = default;

GatewayStats Gateway::stats() const { return {requests_.load(), cache_hits_.load(), retries_.load()}; }

std::string Gateway::cache_key(const std::string& endpoint, const std::string& model, const std::string& operation,
                               const Json& body) {
  std::string material = "librarian-cache/1";
  for (const std::string* part : {&endpoint, &model, &operation}) {
    material += '\0';
    material += *part;
  }
  material += '\0';
  material += body.dump();
  return sha256_hex(material);
}

Json Gateway::request(Route& route, const std::string& operation, const Json& body) {
  const std::string key = cache_key(route.endpoint, route.model, operation, body);
  if (cache_) {
    if (auto hit = cache_->get(key)) {
      ++cache_hits_;
      return *hit;
    }
  }
  if (cfg_.max_requests > 0 && requests_.fetch_add(1) >= cfg_.max_requests) {
    throw BudgetExceeded("request budget of " + std::to_string(cfg_.max_requests) + " exhausted");
  }
  if (cfg_.max_requests <= 0) ++requests_;

  Json response;
  for (int attempt = 0;; ++attempt) {
    if (cfg_.requests_per_second > 0) {
      std::chrono::steady_clock::time_point slot;
      {
        std::lock_guard lock(route.pace_mutex);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, route.next_slot);
        route.next_slot = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                     std::chrono::duration<double>(1.0 / cfg_.requests_per_second));
      }
      std::this_thread::sleep_until(slot);
    }
    in_flight_.acquire();
    try {
      response = route.backend->call(operation, body);
      in_flight_.release();
      break;
    } catch (const EndpointUnavailable&) {
      in_flight_.release();
      if (attempt >= cfg_.max_retries) throw;
      ++retries_;
      std::this_thread::sleep_for(std::chrono::duration<double>(cfg_.retry_backoff_s * std::pow(2.0, attempt)));
    } catch (...) {
      in_flight_.release();
      throw;
    }
  }
  if (cache_) cache_->put(key, response);
  return response;
}

std::vector<Completion> Gateway::sample(const std::string& prompt, std::int64_t k, std::uint64_t seed) {
  if (k < 1) throw Error("sample: k must be at least 1");
  const std::string prompt_hash = sha256_hex(prompt);
  std::vector<Completion> out;
  out.reserve(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < k; ++i) {
    Json body{{"model", sampler_->model},
              {"prompt", prompt},
              {"temperature", cfg_.temperature},
              {"max_tokens", cfg_.max_tokens},
              {"seed", seed + static_cast<std::uint64_t>(i)},
              {"sample_index", i}};
    Json r = request(*sampler_, "complete", body);
    out.push_back({r.at("text").get<std::string>(), Provenance{sampler_->model, cfg_.temperature, i, prompt_hash}});
  }
  return out;
}

ScoredText Gateway::score_suffix(const std::string& prefix, const std::string& suffix) {
  auto tok = code::TokenizerRegistry::global().get(cfg_.tokenizer);
  const std::size_t estimate = tok->count(prefix) + tok->count(suffix);
  if (estimate > cfg_.context_tokens) {
    throw ContextOverflow("prompt of " + std::to_string(estimate) + " tokens exceeds context of " +
                          std::to_string(cfg_.context_tokens));
  }
  Json body{{"model", scorer_->model}, {"prefix", prefix}, {"suffix", suffix}};
  Json r = request(*scorer_, "score", body);
  ScoredText s;
  r.at("token_ids").get_to(s.token_ids);
  r.at("tokens").get_to(s.tokens);
  r.at("token_logprobs").get_to(s.token_logprobs);
  r.at("prompt_boundary").get_to(s.prompt_boundary);
  if (s.tokens.size() != s.token_logprobs.size() || s.token_ids.size() != s.tokens.size() ||
      s.prompt_boundary > s.tokens.size()) {
    throw EndpointUnavailable("scorer returned inconsistent token arrays");
  }
  return s;
}

std::vector<std::vector<double>> Gateway::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) throw Error("embed: no texts");
  Json body{{"model", embedder_->model}, {"input", texts}};
  Json r = request(*embedder_, "embed", body);
  auto vectors = r.at("vectors").get<std::vector<std::vector<double>>>();
  if (vectors.size() != texts.size()) throw EndpointUnavailable("embedder returned the wrong number of vectors");
  for (auto& v : vectors) {
    if (v.size() != vectors.front().size()) throw DimensionMismatch("embedder returned ragged vectors");
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0) {
      for (double& x : v) x /= norm;
    }
  }
  return vectors;
}

}  // namespace librarian::gateway
