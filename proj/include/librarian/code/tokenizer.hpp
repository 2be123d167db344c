#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace librarian::code {

/// Splits text into model tokens. Implementations are immutable and thread-safe.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> split(std::string_view text) const = 0;
  virtual std::size_t count(std::string_view text) const { return split(text).size(); }
};

/// Offline tokenizer: each maximal run of word characters ([A-Za-z0-9_] and
/// non-ASCII bytes) is one token, each other non-whitespace byte is one token,
/// whitespace is dropped.
class FallbackTokenizer final : public Tokenizer {
 public:
  std::vector<std::string> split(std::string_view text) const override;
};

/// Vocabulary tokenizer that segments text into the fewest vocabulary pieces
/// (ties resolved towards the longest leading piece). Bytes missing from the
/// vocabulary become single-byte pieces. Minimum segmentation makes the count
/// subadditive: count(a + b) <= count(a) + count(b).
class VocabTokenizer final : public Tokenizer {
 public:
  explicit VocabTokenizer(const std::vector<std::string>& pieces);

  /// Reads a HuggingFace `tokenizer.json` (model.vocab) or a flat
  /// `{piece: id}` object. Byte-level symbols (Ġ for space, Ċ for newline)
  /// are mapped back to raw bytes.
  static std::shared_ptr<VocabTokenizer> load(const std::filesystem::path& path);

  std::vector<std::string> split(std::string_view text) const override;
  std::size_t count(std::string_view text) const override;
  std::size_t vocabulary_size() const noexcept { return size_; }

 private:
  struct TrieNode {
    std::map<unsigned char, std::size_t> next;
    bool terminal = false;
  };
  std::vector<TrieNode> trie_;
  std::size_t size_ = 0;

  std::vector<std::size_t> segment(std::string_view text) const;
};

/// Decodes one GPT-2 style byte-level string into raw bytes.
std::string decode_byte_level(std::string_view symbols);

inline constexpr std::string_view kRefModelTokenizer = "ref-model";
inline constexpr std::string_view kFallbackTokenizer = "fallback";

/// Named tokenizers. `ref-model` is backed by the vocabulary file given to
/// `set_vocabulary_path` (default: the shipped reference vocabulary, or the
/// LIBRARIAN_VOCAB environment variable).
class TokenizerRegistry {
 public:
  static TokenizerRegistry& global();

  void add(std::string id, std::shared_ptr<const Tokenizer> tokenizer);
  void set_vocabulary_path(const std::filesystem::path& path);
  /// Throws UnknownTokenizer.
  std::shared_ptr<const Tokenizer> get(std::string_view id) const;

 private:
  TokenizerRegistry();
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<const Tokenizer>, std::less<>> tokenizers_;
  std::filesystem::path vocabulary_path_;
};

std::filesystem::path default_vocabulary_path();

/// Throws UnknownTokenizer.
std::size_t count_tokens(std::string_view text, std::string_view tokenizer = kRefModelTokenizer);

}  // namespace librarian::code
