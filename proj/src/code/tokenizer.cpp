#include "librarian/code/tokenizer.hpp"

#include <array>
#include <cstdlib>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "librarian/errors.hpp"

#ifndef LIBRARIAN_DATA_DIR
#define LIBRARIAN_DATA_DIR "data"
#endif

namespace librarian::code {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
         c >= 0x80;
}

bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Inverse of GPT-2's bytes_to_unicode: code point -> byte.
const std::map<char32_t, unsigned char>& byte_level_inverse() {
  static const std::map<char32_t, unsigned char> inverse = [] {
    std::map<char32_t, unsigned char> m;
    std::array<bool, 256> direct{};
    for (int b = '!'; b <= '~'; ++b) direct[static_cast<std::size_t>(b)] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) direct[static_cast<std::size_t>(b)] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) direct[static_cast<std::size_t>(b)] = true;
    char32_t extra = 256;
    for (int b = 0; b < 256; ++b) {
      if (direct[static_cast<std::size_t>(b)]) {
        m[static_cast<char32_t>(b)] = static_cast<unsigned char>(b);
      } else {
        m[extra++] = static_cast<unsigned char>(b);
      }
    }
    return m;
  }();
  return inverse;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace

std::string decode_byte_level(std::string_view symbols) {
  const auto& inverse = byte_level_inverse();
  std::string out;
  std::size_t i = 0;
  while (i < symbols.size()) {
    auto c = static_cast<unsigned char>(symbols[i]);
    char32_t cp;
    std::size_t len;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c >> 5) == 0x6 && i + 1 < symbols.size()) {
      cp = ((c & 0x1Fu) << 6) | (static_cast<unsigned char>(symbols[i + 1]) & 0x3Fu);
      len = 2;
    } else if ((c >> 4) == 0xE && i + 2 < symbols.size()) {
      cp = ((c & 0x0Fu) << 12) | ((static_cast<unsigned char>(symbols[i + 1]) & 0x3Fu) << 6) |
           (static_cast<unsigned char>(symbols[i + 2]) & 0x3Fu);
      len = 3;
    } else if ((c >> 3) == 0x1E && i + 3 < symbols.size()) {
      cp = ((c & 0x07u) << 18) | ((static_cast<unsigned char>(symbols[i + 1]) & 0x3Fu) << 12) |
           ((static_cast<unsigned char>(symbols[i + 2]) & 0x3Fu) << 6) |
           (static_cast<unsigned char>(symbols[i + 3]) & 0x3Fu);
      len = 4;
    } else {
      out.push_back(static_cast<char>(c));
      ++i;
      continue;
    }
    if (auto it = inverse.find(cp); it != inverse.end()) {
      out.push_back(static_cast<char>(it->second));
    } else {
      append_utf8(out, cp);
    }
    i += len;
  }
  return out;
}

std::vector<std::string> FallbackTokenizer::split(std::string_view text) const {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    auto c = static_cast<unsigned char>(text[i]);
    if (is_space_byte(c)) {
      ++i;
    } else if (is_word_byte(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, text[i]);
      ++i;
    }
  }
  return out;
}

VocabTokenizer::VocabTokenizer(const std::vector<std::string>& pieces) {
  trie_.emplace_back();
  for (const auto& p : pieces) {
    if (p.empty()) continue;
    std::size_t node = 0;
    for (unsigned char c : p) {
      auto it = trie_[node].next.find(c);
      if (it == trie_[node].next.end()) {
        trie_.emplace_back();
        std::size_t child = trie_.size() - 1;
        trie_[node].next.emplace(c, child);
        node = child;
      } else {
        node = it->second;
      }
    }
    if (!trie_[node].terminal) {
      trie_[node].terminal = true;
      ++size_;
    }
  }
}

std::shared_ptr<VocabTokenizer> VocabTokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UnknownTokenizer("cannot read vocabulary file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UnknownTokenizer("vocabulary file " + path.string() + ": " + e.what());
  }
  const nlohmann::json* vocab = &j;
  if (j.contains("model") && j["model"].contains("vocab")) vocab = &j["model"]["vocab"];
  if (!vocab->is_object()) throw UnknownTokenizer("vocabulary file " + path.string() + ": expected an object");
  std::vector<std::string> pieces;
  pieces.reserve(vocab->size());
  for (const auto& [key, id] : vocab->items()) pieces.push_back(decode_byte_level(key));
  return std::make_shared<VocabTokenizer>(pieces);
}

std::vector<std::size_t> VocabTokenizer::segment(std::string_view text) const {
  const std::size_t n = text.size();
  constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> best(n + 1, kInf);
  std::vector<std::size_t> step(n + 1, 0);
  best[n] = 0;
  for (std::size_t i = n; i-- > 0;) {
    // A single byte is always admissible.
    best[i] = best[i + 1] + 1;
    step[i] = 1;
    std::size_t node = 0;
    for (std::size_t j = i; j < n; ++j) {
      auto it = trie_[node].next.find(static_cast<unsigned char>(text[j]));
      if (it == trie_[node].next.end()) break;
      node = it->second;
      if (trie_[node].terminal) {
        std::size_t len = j + 1 - i;
        std::size_t cost = best[j + 1] + 1;
        if (cost < best[i] || (cost == best[i] && len > step[i])) {
          best[i] = cost;
          step[i] = len;
        }
      }
    }
  }
  std::vector<std::size_t> cuts;
  for (std::size_t i = 0; i < n; i += step[i]) cuts.push_back(step[i]);
  return cuts;
}

std::vector<std::string> VocabTokenizer::split(std::string_view text) const {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (std::size_t len : segment(text)) {
    out.emplace_back(text.substr(pos, len));
    pos += len;
  }
  return out;
}

std::size_t VocabTokenizer::count(std::string_view text) const { return segment(text).size(); }

std::filesystem::path default_vocabulary_path() {
  if (const char* env = std::getenv("LIBRARIAN_VOCAB"); env && *env) return env;
  return std::filesystem::path(LIBRARIAN_DATA_DIR) / "vocab.json";
}

TokenizerRegistry::TokenizerRegistry() : vocabulary_path_(default_vocabulary_path()) {
  tokenizers_.emplace(std::string(kFallbackTokenizer), std::make_shared<FallbackTokenizer>());
}

TokenizerRegistry& TokenizerRegistry::global() {
  static TokenizerRegistry registry;
  return registry;
}

void TokenizerRegistry::add(std::string id, std::shared_ptr<const Tokenizer> tokenizer) {
  std::lock_guard lock(mutex_);
  tokenizers_[std::move(id)] = std::move(tokenizer);
}

void TokenizerRegistry::set_vocabulary_path(const std::filesystem::path& path) {
  std::lock_guard lock(mutex_);
  if (path == vocabulary_path_) return;
  vocabulary_path_ = path;
  tokenizers_.erase(std::string(kRefModelTokenizer));
}

std::shared_ptr<const Tokenizer> TokenizerRegistry::get(std::string_view id) const {
  std::lock_guard lock(mutex_);
  if (auto it = tokenizers_.find(id); it != tokenizers_.end()) return it->second;
  if (id == kRefModelTokenizer) {
    auto tok = VocabTokenizer::load(vocabulary_path_);
    tokenizers_.emplace(std::string(kRefModelTokenizer), tok);
    return tok;
  }
  throw UnknownTokenizer("unknown tokenizer '" + std::string(id) + "'");
}

std::size_t count_tokens(std::string_view text, std::string_view tokenizer) {
  return TokenizerRegistry::global().get(tokenizer)->count(text);
}

}  // namespace librarian::code
