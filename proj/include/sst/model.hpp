#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "sst/config.hpp"
#include "sst/kv_cache.hpp"
#include "sst/tensor.hpp"
#include "sst/tokenizer.hpp"
#include "sst/weights.hpp"

// The base decoder path: embedding, N x (GQA attention + SwiGLU FFN) with
// pre-norm residual blocks, final norm and an untied output head.
namespace sst {

// Causal mask over s queries at positions [start_pos, start_pos + s) and
// keys at [0, start_pos + s). Query i may see key j iff j <= start_pos + i.
class AttentionMask {
 public:
  static AttentionMask causal(std::size_t s, std::size_t start_pos);

  std::size_t query_len() const noexcept { return query_len_; }
  std::size_t key_len() const noexcept { return query_len_ + start_pos_; }
  std::size_t start_pos() const noexcept { return start_pos_; }

  bool allows(std::size_t query, std::size_t key) const noexcept {
    return key <= start_pos_ + query;
  }
  // 0 where allowed, -inf elsewhere.
  float bias(std::size_t query, std::size_t key) const noexcept;

 private:
  std::size_t query_len_ = 0;
  std::size_t start_pos_ = 0;
};

// Observation hooks; each is optional. `on_residual` sees the stream that
// feeds the FFN norm (h in the base path, h_blend in the state-stream path).
// `on_block_output` sees the block output.
struct ForwardProbe {
  std::function<void(std::size_t layer, const Tensor&)> on_residual;
  std::function<void(std::size_t layer, const Tensor&)> on_block_output;
};

// Attention term for x_normed[b, s, d]. Writes the rotated keys and values
// of the current rows into kv at [start_pos, start_pos + s) but does not
// advance kv. Requires start_pos == kv.cur_pos().
Tensor attention_block(const Tensor& x_normed, std::size_t layer, KVCache& kv,
                       std::size_t start_pos, const AttentionMask& mask,
                       const WeightBundle& weights, const ModelConfig& cfg);

// w_down(silu(x w_gate) * (x w_up)); x is already normalized.
Tensor ffn_swiglu(const Tensor& x_normed, const LayerWeights& layer);

// h = x + attention(rms_norm(x)); out = h + ffn(rms_norm(h)).
Tensor block_forward_base(const Tensor& x, std::size_t layer, KVCache& kv,
                          std::size_t start_pos, const AttentionMask& mask,
                          const WeightBundle& weights, const ModelConfig& cfg,
                          const ForwardProbe* probe = nullptr);

// [1, s, d] embedding rows for the ids; throws std::out_of_range on a bad id.
Tensor embed_tokens(std::span<const TokenId> tokens, const WeightBundle& weights,
                    const ModelConfig& cfg);

// Final norm and output head: [..., d] -> [..., vocab].
Tensor output_logits(const Tensor& x, const WeightBundle& weights,
                     const ModelConfig& cfg);

using BlockFn = std::function<Tensor(const Tensor& x, std::size_t layer,
                                     const AttentionMask& mask)>;

// Embedding -> block(0..n_layers-1) -> head, with context checks. Both the
// base and the state-stream forward are this loop with a different block.
Tensor run_decoder(std::span<const TokenId> tokens, const KVCache& kv,
                   std::size_t start_pos, const WeightBundle& weights,
                   const ModelConfig& cfg, const BlockFn& block);

// Logits [1, s, vocab] for tokens at positions [start_pos, start_pos + s).
Tensor forward_base(std::span<const TokenId> tokens, KVCache& kv,
                    std::size_t start_pos, const WeightBundle& weights,
                    const ModelConfig& cfg, const ForwardProbe* probe = nullptr);

}  // namespace sst
