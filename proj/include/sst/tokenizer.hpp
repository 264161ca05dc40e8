#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sst {

using TokenId = std::uint32_t;

// One id per byte value plus three specials. encode never adds BOS; the
// caller decides. decode drops the specials.
class ByteTokenizer {
 public:
  static constexpr TokenId kBos = 256;
  static constexpr TokenId kEos = 257;
  static constexpr TokenId kPad = 258;
  static constexpr std::size_t kVocabSize = 259;

  static std::vector<TokenId> encode(std::string_view text);
  static std::string decode(std::span<const TokenId> ids);

  static bool is_special(TokenId id) { return id >= 256 && id < kVocabSize; }
};

}  // namespace sst
