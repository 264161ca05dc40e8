#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sst/config.hpp"
#include "sst/kv_cache.hpp"
#include "sst/model.hpp"
#include "sst/tensor.hpp"
#include "sst/weights.hpp"

namespace sst {

// Useful blend strengths sit in [0.013, 0.04]; 0.027 is the usual choice.
inline constexpr float kDefaultAlpha = 0.027f;
inline constexpr float kAlphaRangeLow = 0.013f;
inline constexpr float kAlphaRangeHigh = 0.04f;

// Which cached rows line up with the s current rows.
//   tail: the last s cached rows (default; during decode s == 1 and the
//         newest row is the state of the position just processed)
//   head: the first s cached rows, i.e. a literal C[:, :s]
enum class Alignment { tail, head };

// Gain used when normalizing the cache before blending.
enum class CacheNorm { layer_gain, unit };

struct StreamConfig {
  float alpha = kDefaultAlpha;
  std::size_t recursions = 0;  // extra passes per token beyond the first
  Alignment alignment = Alignment::tail;
  CacheNorm cache_norm = CacheNorm::layer_gain;

  // Throws std::invalid_argument unless alpha is in [0, 1].
  void validate() const;
};

std::string_view to_string(Alignment a);
Alignment parse_alignment(std::string_view text);
std::string_view to_string(CacheNorm n);
CacheNorm parse_cache_norm(std::string_view text);

// Reads alpha / recursions / alignment / cache_norm; other keys are ignored.
StreamConfig stream_config_from(const ConfigEntries& entries, StreamConfig defaults = {});

// Per-layer persistent state C[b, cached_len, d]. A layer is empty until its
// first pass. Stored tensors are private copies; nothing outside this class
// aliases them.
class StateCache {
 public:
  explicit StateCache(std::size_t n_layers);

  std::size_t n_layers() const noexcept { return layers_.size(); }
  bool initialized(std::size_t layer) const;
  std::size_t cached_len(std::size_t layer) const;
  // Throws std::logic_error if the layer is uninitialized.
  const Tensor& state(std::size_t layer) const;

  // First-pass rule C_0 = rms_norm(x). Throws std::logic_error if the layer
  // is already initialized.
  void init(std::size_t layer, const Tensor& x_normed);

  // Appends rows x_normed[:, cached_len:s] so that cached_len reaches s.
  // New positions follow the first-pass rule.
  void extend(std::size_t layer, const Tensor& x_normed);

  // Replaces the rows aligned with `out` (all of them when lengths match).
  void update(std::size_t layer, const Tensor& out, Alignment alignment);

  // Every layer back to uninitialized.
  void reset();

 private:
  void check_layer(std::size_t layer) const;
  void check_compatible(const Tensor& t, std::string_view what) const;

  std::vector<std::optional<Tensor>> layers_;
};

// (1 - alpha) * h + alpha * rms_norm(C_aligned). C is not modified.
//
// Head alignment needs cached_len >= s. Tail alignment accepts any
// cached_len >= 1: when cached_len < s the cache lines up with the last
// cached_len rows of h and the earlier rows of h pass through unchanged.
Tensor cache_blend(const Tensor& h, const StateCache& cache, std::size_t layer,
                   float alpha, std::span<const float> norm_gain, float eps,
                   Alignment alignment);

// h = x + attention(rms_norm(x)); C initialized from rms_norm(x) on first
// pass; h_blend = cache_blend(h); out = h_blend + ffn(rms_norm(h_blend));
// C <- out.
Tensor block_forward_sst(const Tensor& x, std::size_t layer, KVCache& kv,
                         StateCache& state, std::size_t start_pos,
                         const AttentionMask& mask, const WeightBundle& weights,
                         const ModelConfig& cfg, const StreamConfig& stream,
                         const ForwardProbe* probe = nullptr);

Tensor forward_sst(std::span<const TokenId> tokens, KVCache& kv, StateCache& state,
                   std::size_t start_pos, const WeightBundle& weights,
                   const ModelConfig& cfg, const StreamConfig& stream,
                   const ForwardProbe* probe = nullptr);

// n_tokens * d_model * n_layers * bytes_per_value; throws
// std::overflow_error if the product does not fit in 64 bits.
std::uint64_t cache_overhead(std::uint64_t n_tokens, std::uint64_t d_model,
                             std::uint64_t n_layers, std::uint64_t bytes_per_value);

}  // namespace sst
