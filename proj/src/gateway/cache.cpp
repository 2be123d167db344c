#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "librarian/digest.hpp"
#include "librarian/errors.hpp"
#include "librarian/gateway.hpp"

namespace librarian::gateway {

namespace fs = std::filesystem;

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path ResponseCache::entry_path(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<Json> ResponseCache::get(const std::string& key) const {
  const fs::path p = entry_path(key);
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  Json entry;
  try {
    entry = Json::parse(ss.str());
  } catch (const Json::exception&) {
    throw CacheCorruption("unreadable cache entry " + p.string());
  }
  if (!entry.contains("key") || !entry.contains("sha256") || !entry.contains("response") || entry["key"] != key) {
    throw CacheCorruption("malformed cache entry " + p.string());
  }
  if (sha256_hex(entry["response"].dump()) != entry["sha256"].get<std::string>()) {
    throw CacheCorruption("hash mismatch in cache entry " + p.string());
  }
  return entry["response"];
}

void ResponseCache::put(const std::string& key, const Json& response) const {
  const fs::path p = entry_path(key);
  if (fs::exists(p)) return;
  fs::create_directories(p.parent_path());
  static std::atomic<std::uint64_t> counter{0};
  std::ostringstream tmp_name;
  tmp_name << key << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "." << counter++;
  const fs::path tmp = p.parent_path() / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write cache entry " + tmp.string());
    Json entry{{"key", key}, {"sha256", sha256_hex(response.dump())}, {"response", response}};
    out << entry.dump() << '\n';
  }
  // rename() is atomic; a concurrent writer with the same key stores identical bytes.
  std::error_code ec;
  fs::rename(tmp, p, ec);
  if (ec) {
    fs::remove(tmp, ec);
  }
}

}  // namespace librarian::gateway
