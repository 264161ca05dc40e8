#include "sst/tokenizer.hpp"

#include <stdexcept>

namespace sst {

std::vector<TokenId> ByteTokenizer::encode(std::string_view text) {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<unsigned char>(c));
  return ids;
}

std::string ByteTokenizer::decode(std::span<const TokenId> ids) {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id < 256) {
      out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    } else if (!is_special(id)) {
      throw std::out_of_range("decode: unknown token id " + std::to_string(id));
    }
  }
  return out;
}

}  // namespace sst
