#include "sst/kv_cache.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "sst/hash.hpp"

namespace sst {

KVCache::KVCache(const ModelConfig& cfg, std::size_t batch)
    : batch_(batch),
      n_kv_heads_(cfg.n_kv_heads),
      head_dim_(cfg.head_dim()),
      max_seq_(cfg.max_seq),
      keys_(cfg.n_layers),
      values_(cfg.n_layers) {
  if (batch_ == 0) throw std::invalid_argument("KVCache: batch must be positive");
  const std::size_t per_layer = batch_ * n_kv_heads_ * max_seq_ * head_dim_;
  for (auto& k : keys_) k.assign(per_layer, 0.0f);
  for (auto& v : values_) v.assign(per_layer, 0.0f);
}

void KVCache::advance(std::size_t n) {
  if (n > max_seq_ - cur_pos_) {
    throw std::out_of_range("KVCache: advancing by " + std::to_string(n) +
                            " from " + std::to_string(cur_pos_) +
                            " exceeds max_seq " + std::to_string(max_seq_));
  }
  cur_pos_ += n;
}

void KVCache::reset() {
  cur_pos_ = 0;
  for (auto& k : keys_) std::fill(k.begin(), k.end(), 0.0f);
  for (auto& v : values_) std::fill(v.begin(), v.end(), 0.0f);
}

std::size_t KVCache::offset(std::size_t b, std::size_t head) const {
  return (b * n_kv_heads_ + head) * max_seq_ * head_dim_;
}

std::span<float> KVCache::keys(std::size_t layer, std::size_t b, std::size_t head) {
  return std::span<float>(keys_.at(layer)).subspan(offset(b, head), max_seq_ * head_dim_);
}
std::span<const float> KVCache::keys(std::size_t layer, std::size_t b,
                                     std::size_t head) const {
  return std::span<const float>(keys_.at(layer)).subspan(offset(b, head),
                                                          max_seq_ * head_dim_);
}
std::span<float> KVCache::values(std::size_t layer, std::size_t b, std::size_t head) {
  return std::span<float>(values_.at(layer)).subspan(offset(b, head), max_seq_ * head_dim_);
}
std::span<const float> KVCache::values(std::size_t layer, std::size_t b,
                                       std::size_t head) const {
  return std::span<const float>(values_.at(layer)).subspan(offset(b, head),
                                                            max_seq_ * head_dim_);
}

std::uint64_t KVCache::prefix_hash(std::size_t n) const {
  n = std::min(n, max_seq_);
  Fnv1a h;
  for (std::size_t l = 0; l < n_layers(); ++l) {
    for (std::size_t b = 0; b < batch_; ++b) {
      for (std::size_t g = 0; g < n_kv_heads_; ++g) {
        h.update(std::as_bytes(keys(l, b, g).first(n * head_dim_)));
        h.update(std::as_bytes(values(l, b, g).first(n * head_dim_)));
      }
    }
  }
  return h.digest();
}

}  // namespace sst
