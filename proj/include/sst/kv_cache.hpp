#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sst/config.hpp"

namespace sst {

// Per-layer key/value store laid out [batch][kv_head][max_seq][head_dim].
//
// Only cur_pos decides what is persisted: attention writes the rows for
// [cur_pos, cur_pos + s) on every pass, and those rows become part of the
// context once the caller calls advance(). Rows below cur_pos are never
// written again.
class KVCache {
 public:
  KVCache(const ModelConfig& cfg, std::size_t batch = 1);

  std::size_t cur_pos() const noexcept { return cur_pos_; }
  std::size_t max_seq() const noexcept { return max_seq_; }
  std::size_t batch() const noexcept { return batch_; }
  std::size_t n_layers() const noexcept { return keys_.size(); }
  std::size_t n_kv_heads() const noexcept { return n_kv_heads_; }
  std::size_t head_dim() const noexcept { return head_dim_; }

  // Throws std::out_of_range if cur_pos would pass max_seq.
  void advance(std::size_t n);
  // Back to an empty context with zeroed storage.
  void reset();

  // [max_seq, head_dim] rows for one (layer, batch, kv_head).
  std::span<float> keys(std::size_t layer, std::size_t b, std::size_t head);
  std::span<const float> keys(std::size_t layer, std::size_t b, std::size_t head) const;
  std::span<float> values(std::size_t layer, std::size_t b, std::size_t head);
  std::span<const float> values(std::size_t layer, std::size_t b, std::size_t head) const;

  // FNV-1a over every layer's keys and values at positions < n.
  std::uint64_t prefix_hash(std::size_t n) const;

 private:
  std::size_t offset(std::size_t b, std::size_t head) const;

  std::size_t batch_;
  std::size_t n_kv_heads_;
  std::size_t head_dim_;
  std::size_t max_seq_;
  std::size_t cur_pos_ = 0;
  std::vector<std::vector<float>> keys_;
  std::vector<std::vector<float>> values_;
};

}  // namespace sst
