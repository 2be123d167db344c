#pragma once

#include <filesystem>
#include <set>
#include <string>

#include "librarian/gateway.hpp"

namespace librarian::gateway {

class StubBackend final : public Backend {
 public:
  StubBackend(std::string profile, const GatewayConfig& cfg);
  Json call(const std::string& operation, const Json& request) override;

 private:
  Json complete(const Json& request) const;
  Json score(const Json& request) const;
  Json embed(const Json& request) const;

  std::string profile_;
  std::string tokenizer_;
  std::filesystem::path script_path_;
  Json script_;
  std::set<std::string, std::less<>> common_;
};

std::unique_ptr<Backend> make_http_backend(const std::string& endpoint, const GatewayConfig& cfg);

}  // namespace librarian::gateway
