#include "sst/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "sst/kernels.hpp"

namespace sst {

AttentionMask AttentionMask::causal(std::size_t s, std::size_t start_pos) {
  AttentionMask m;
  m.query_len_ = s;
  m.start_pos_ = start_pos;
  return m;
}

float AttentionMask::bias(std::size_t query, std::size_t key) const noexcept {
  return allows(query, key) ? 0.0f : -std::numeric_limits<float>::infinity();
}

namespace {

// [b, s, heads * hd] -> [heads, s, hd] for one batch row.
Tensor split_heads(const Tensor& x, std::size_t b, std::size_t heads, std::size_t hd) {
  const std::size_t s = x.dim(1);
  const std::size_t width = heads * hd;
  Tensor out({heads, s, hd});
  const auto src = x.data();
  auto dst = out.data();
  for (std::size_t p = 0; p < s; ++p) {
    const float* row = src.data() + (b * s + p) * width;
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < hd; ++i) dst[(h * s + p) * hd + i] = row[h * hd + i];
    }
  }
  return out;
}

}  // namespace

Tensor attention_block(const Tensor& x_normed, std::size_t layer, KVCache& kv,
                       std::size_t start_pos, const AttentionMask& mask,
                       const WeightBundle& weights, const ModelConfig& cfg) {
  if (x_normed.rank() != 3 || x_normed.dim(2) != cfg.d_model) {
    throw ShapeError("attention_block expects [b, s, d_model], got " +
                     shape_str(x_normed.shape()));
  }
  const std::size_t batch = x_normed.dim(0), s = x_normed.dim(1);
  if (batch != kv.batch()) throw ShapeError("attention_block: batch does not match KV cache");
  if (start_pos != kv.cur_pos()) {
    throw std::logic_error("attention_block: start_pos " + std::to_string(start_pos) +
                           " != kv.cur_pos " + std::to_string(kv.cur_pos()));
  }
  if (start_pos + s > cfg.max_seq) {
    throw std::out_of_range("attention_block: positions up to " +
                            std::to_string(start_pos + s) + " exceed max_seq " +
                            std::to_string(cfg.max_seq));
  }
  if (mask.query_len() != s || mask.start_pos() != start_pos) {
    throw ShapeError("attention_block: mask does not cover the current rows");
  }

  const LayerWeights w = weights.layer(layer);
  const std::size_t hd = cfg.head_dim();
  const std::size_t n_heads = cfg.n_heads, n_kv = cfg.n_kv_heads;
  const std::size_t group = cfg.group_size();
  const std::size_t key_len = mask.key_len();
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  const Tensor q = kernels::linear(x_normed, w.wq);
  const Tensor k = kernels::linear(x_normed, w.wk);
  const Tensor v = kernels::linear(x_normed, w.wv);

  Tensor attended({batch, s, n_heads * hd});
  std::vector<float> scores(key_len);
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor qh = kernels::rope_apply(split_heads(q, b, n_heads, hd), start_pos,
                                          cfg.rope_theta);
    const Tensor kh = kernels::rope_apply(split_heads(k, b, n_kv, hd), start_pos,
                                          cfg.rope_theta);
    const Tensor vh = split_heads(v, b, n_kv, hd);

    for (std::size_t g = 0; g < n_kv; ++g) {
      auto kc = kv.keys(layer, b, g);
      auto vc = kv.values(layer, b, g);
      for (std::size_t p = 0; p < s; ++p) {
        for (std::size_t i = 0; i < hd; ++i) {
          kc[(start_pos + p) * hd + i] = kh[(g * s + p) * hd + i];
          vc[(start_pos + p) * hd + i] = vh[(g * s + p) * hd + i];
        }
      }
    }

    for (std::size_t h = 0; h < n_heads; ++h) {
      const std::size_t g = h / group;
      const auto kc = std::as_const(kv).keys(layer, b, g);
      const auto vc = std::as_const(kv).values(layer, b, g);
      for (std::size_t p = 0; p < s; ++p) {
        const float* qrow = qh.data().data() + (h * s + p) * hd;
        // Masked keys are dropped from the softmax entirely.
        std::size_t visible = 0;
        for (std::size_t j = 0; j < key_len && mask.allows(p, j); ++j) {
          float dot = 0.0f;
          for (std::size_t i = 0; i < hd; ++i) dot += qrow[i] * kc[j * hd + i];
          scores[j] = dot * scale;
          visible = j + 1;
        }
        kernels::softmax_inplace(std::span<float>(scores).first(visible));
        float* out = attended.data().data() + (b * s + p) * n_heads * hd + h * hd;
        for (std::size_t j = 0; j < visible; ++j) {
          const float wj = scores[j];
          for (std::size_t i = 0; i < hd; ++i) out[i] += wj * vc[j * hd + i];
        }
      }
    }
  }
  return kernels::linear(attended, w.wo);
}

Tensor ffn_swiglu(const Tensor& x_normed, const LayerWeights& layer) {
  const Tensor gate = kernels::silu(kernels::linear(x_normed, layer.w_gate));
  const Tensor up = kernels::linear(x_normed, layer.w_up);
  return kernels::linear(kernels::mul(gate, up), layer.w_down);
}

Tensor block_forward_base(const Tensor& x, std::size_t layer, KVCache& kv,
                          std::size_t start_pos, const AttentionMask& mask,
                          const WeightBundle& weights, const ModelConfig& cfg,
                          const ForwardProbe* probe) {
  const LayerWeights w = weights.layer(layer);
  const Tensor x_normed = kernels::rms_norm(x, w.attention_norm, cfg.norm_eps);
  const Tensor h = kernels::add(
      x, attention_block(x_normed, layer, kv, start_pos, mask, weights, cfg));
  if (probe && probe->on_residual) probe->on_residual(layer, h);
  Tensor out = kernels::add(h, ffn_swiglu(kernels::rms_norm(h, w.ffn_norm, cfg.norm_eps), w));
  if (probe && probe->on_block_output) probe->on_block_output(layer, out);
  return out;
}

Tensor embed_tokens(std::span<const TokenId> tokens, const WeightBundle& weights,
                    const ModelConfig& cfg) {
  const Tensor& table = weights.embedding();
  Tensor x({1, tokens.size(), cfg.d_model});
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    if (tokens[p] >= cfg.vocab_size) {
      throw std::out_of_range("token id " + std::to_string(tokens[p]) +
                              " out of range for vocab " + std::to_string(cfg.vocab_size));
    }
    const auto src = table.row(tokens[p]);
    std::copy(src.begin(), src.end(), x.row(p).begin());
  }
  return x;
}

Tensor output_logits(const Tensor& x, const WeightBundle& weights, const ModelConfig& cfg) {
  Tensor logits =
      kernels::linear(kernels::rms_norm(x, weights.final_norm(), cfg.norm_eps), weights.output());
  require_finite(logits, "logits");
  return logits;
}

Tensor run_decoder(std::span<const TokenId> tokens, const KVCache& kv,
                   std::size_t start_pos, const WeightBundle& weights,
                   const ModelConfig& cfg, const BlockFn& block) {
  if (tokens.empty()) throw std::invalid_argument("forward: empty token sequence");
  if (start_pos + tokens.size() > cfg.max_seq) {
    throw std::out_of_range("forward: context overflow (" +
                            std::to_string(start_pos + tokens.size()) + " > max_seq " +
                            std::to_string(cfg.max_seq) + ")");
  }
  if (start_pos != kv.cur_pos()) {
    throw std::logic_error("forward: start_pos does not match kv.cur_pos");
  }
  Tensor x = embed_tokens(tokens, weights, cfg);
  const AttentionMask mask = AttentionMask::causal(tokens.size(), start_pos);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) x = block(x, l, mask);
  return output_logits(x, weights, cfg);
}

Tensor forward_base(std::span<const TokenId> tokens, KVCache& kv, std::size_t start_pos,
                    const WeightBundle& weights, const ModelConfig& cfg,
                    const ForwardProbe* probe) {
  return run_decoder(tokens, kv, start_pos, weights, cfg,
                     [&](const Tensor& x, std::size_t layer, const AttentionMask& mask) {
                       return block_forward_base(x, layer, kv, start_pos, mask, weights,
                                                 cfg, probe);
                     });
}

}  // namespace sst
