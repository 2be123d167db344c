#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "librarian/model.hpp"

namespace librarian::gateway {

/// Endpoints are base URLs of OpenAI-compatible servers or `stub:<profile>`.
///
/// Stub profiles (version 1):
///   stub:echo              sampling: k distinct completions that keep every program
///                          unchanged; summaries list the program's identifiers
///   stub:empty             sampling: empty completions
///   stub:scripted:<file>   sampling: completions read from a JSON script keyed by the
///                          set of program ids in the prompt, echo otherwise
///   stub:uniform           scoring: every token costs ln 2 nats
///   stub:vocab-aware       scoring: ln 2 for whitespace or common tokens, 5 ln 2 otherwise
///   stub:bow               embedding: normalised sum of hashed per-word vectors
struct GatewayConfig {
  std::string sampler_endpoint = "stub:echo";
  std::string scorer_endpoint = "stub:vocab-aware";
  std::string embedder_endpoint = "stub:bow";
  std::string sampler_model = "stub";
  std::string scorer_model = "stub";
  std::string embedder_model = "stub";
  double temperature = 0.8;
  std::int64_t max_tokens = 4096;
  double request_timeout_s = 120.0;
  std::filesystem::path cache_dir;
  std::size_t context_tokens = 32768;
  std::string tokenizer = "ref-model";
  std::filesystem::path common_tokens_path;
  std::size_t max_in_flight = 8;
  double requests_per_second = 0.0;
  int max_retries = 3;
  double retry_backoff_s = 0.5;
  /// Upper bound on uncached requests; 0 means unlimited.
  std::int64_t max_requests = 0;
  std::string api_key;

  bool operator==(const GatewayConfig&) const = default;
};

void to_json(Json& j, const GatewayConfig& c);
void from_json(const Json& j, GatewayConfig& c);

struct Completion {
  std::string text;
  Provenance provenance;
};

/// Token-level log-probabilities of prefix + suffix.
struct ScoredText {
  std::vector<std::int64_t> token_ids;
  std::vector<std::string> tokens;
  std::vector<double> token_logprobs;
  /// Index of the first suffix token.
  std::size_t prompt_boundary = 0;

  double suffix_logprob() const;
  /// Negated suffix log-probability in nats.
  double suffix_nats() const { return -suffix_logprob(); }
};

struct GatewayStats {
  std::int64_t requests = 0;
  std::int64_t cache_hits = 0;
  std::int64_t retries = 0;
};

/// Normalised request transport. Operations are "complete", "score" and "embed".
class Backend {
 public:
  virtual ~Backend() = default;
  virtual Json call(const std::string& operation, const Json& request) = 0;
};

std::unique_ptr<Backend> make_backend(const std::string& endpoint, const GatewayConfig& cfg);

/// Write-once content-addressed response store.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir);
  /// Throws CacheCorruption when a stored entry fails its hash check.
  std::optional<Json> get(const std::string& key) const;
  void put(const std::string& key, const Json& response) const;
  std::filesystem::path entry_path(const std::string& key) const;

 private:
  std::filesystem::path dir_;
};

class Gateway {
 public:
  explicit Gateway(GatewayConfig cfg);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// k completions; sample i is seeded with seed + i. Throws EndpointUnavailable, BudgetExceeded.
  std::vector<Completion> sample(const std::string& prompt, std::int64_t k, std::uint64_t seed = 0);
  /// Throws ContextOverflow when prefix + suffix exceed the context budget.
  ScoredText score_suffix(const std::string& prefix, const std::string& suffix);
  /// Unit-norm vectors of equal dimension.
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts);

  const GatewayConfig& config() const noexcept { return cfg_; }
  GatewayStats stats() const;

  static std::string cache_key(const std::string& endpoint, const std::string& model,
                               const std::string& operation, const Json& body);

 private:
  struct Route;
  Json request(Route& route, const std::string& operation, const Json& body);

  GatewayConfig cfg_;
  std::unique_ptr<Route> sampler_, scorer_, embedder_;
  std::optional<ResponseCache> cache_;
  std::counting_semaphore<1024> in_flight_;
  std::atomic<std::int64_t> requests_{0}, cache_hits_{0}, retries_{0};
};

}  // namespace librarian::gateway
