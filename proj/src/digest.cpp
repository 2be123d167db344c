#include "librarian/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <memory>

#include "librarian/errors.hpp"

namespace librarian {

namespace {

struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* ctx) const noexcept { EVP_MD_CTX_free(ctx); }
};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error("sha256: digest initialisation failed");
    }
  }

  void update(std::string_view data) {
    if (EVP_DigestUpdate(ctx_.get(), data.data(), data.size()) != 1) {
      throw Error("sha256: update failed");
    }
  }

  void update_framed(std::string_view data) {
    std::array<unsigned char, 8> len{};
    std::uint64_t n = data.size();
    for (int i = 7; i >= 0; --i) {
      len[static_cast<std::size_t>(i)] = static_cast<unsigned char>(n & 0xffu);
      n >>= 8;
    }
    update(std::string_view(reinterpret_cast<const char*>(len.data()), len.size()));
    update(data);
  }

  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
    unsigned int size = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), out.data(), &size) != 1) {
      throw Error("sha256: finalisation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    s.reserve(size * 2);
    for (unsigned int i = 0; i < size; ++i) {
      s.push_back(kHex[out[i] >> 4]);
      s.push_back(kHex[out[i] & 0x0f]);
    }
    return s;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data);
  return h.hex();
}

std::string candidate_digest(std::string_view library,
                             const std::map<std::string, std::string>& rewritten) {
  if (rewritten.empty()) {
    throw InvalidCandidate("candidate has no rewritten sources");
  }
  Sha256 h;
  h.update("librarian-candidate/1");
  h.update_framed(library);
  for (const auto& [id, code] : rewritten) {
    h.update_framed(id);
    h.update_framed(code);
  }
  return h.hex();
}

std::uint64_t fnv1a64(std::string_view data) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace librarian
