#include "sst/state_stream.hpp"

#include <charconv>
#include <limits>
#include <stdexcept>
#include <string>

#include "sst/kernels.hpp"

namespace sst {

void StreamConfig::validate() const {
  if (!(alpha >= 0.0f && alpha <= 1.0f)) {
    throw std::invalid_argument("alpha must be in [0, 1], got " + std::to_string(alpha));
  }
}

std::string_view to_string(Alignment a) { return a == Alignment::tail ? "tail" : "head"; }

Alignment parse_alignment(std::string_view text) {
  if (text == "tail") return Alignment::tail;
  if (text == "head") return Alignment::head;
  throw std::invalid_argument("alignment must be 'head' or 'tail', got '" +
                              std::string(text) + "'");
}

std::string_view to_string(CacheNorm n) {
  return n == CacheNorm::layer_gain ? "layer" : "unit";
}

CacheNorm parse_cache_norm(std::string_view text) {
  if (text == "layer") return CacheNorm::layer_gain;
  if (text == "unit") return CacheNorm::unit;
  throw std::invalid_argument("cache_norm must be 'layer' or 'unit', got '" +
                              std::string(text) + "'");
}

StreamConfig stream_config_from(const ConfigEntries& entries, StreamConfig defaults) {
  StreamConfig out = defaults;
  if (auto it = entries.find("alpha"); it != entries.end()) {
    const auto& v = it->second;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out.alpha);
    if (ec != std::errc() || p != v.data() + v.size()) {
      throw ConfigError("config: 'alpha' expects a number, got '" + v + "'");
    }
  }
  if (auto it = entries.find("recursions"); it != entries.end()) {
    const auto& v = it->second;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out.recursions);
    if (ec != std::errc() || p != v.data() + v.size()) {
      throw ConfigError("config: 'recursions' expects a non-negative integer, got '" + v + "'");
    }
  }
  try {
    if (auto it = entries.find("alignment"); it != entries.end()) {
      out.alignment = parse_alignment(it->second);
    }
    if (auto it = entries.find("cache_norm"); it != entries.end()) {
      out.cache_norm = parse_cache_norm(it->second);
    }
    out.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return out;
}

StateCache::StateCache(std::size_t n_layers) : layers_(n_layers) {}

void StateCache::check_layer(std::size_t layer) const {
  if (layer >= layers_.size()) {
    throw std::out_of_range("state cache: layer " + std::to_string(layer) +
                            " out of range");
  }
}

void StateCache::check_compatible(const Tensor& t, std::string_view what) const {
  if (t.rank() != 3) {
    throw ShapeError(std::string(what) + ": expected [b, s, d], got " + shape_str(t.shape()));
  }
  for (const auto& other : layers_) {
    if (other && (other->dim(0) != t.dim(0) || other->dim(2) != t.dim(2))) {
      throw ShapeError(std::string(what) + ": batch/width " + shape_str(t.shape()) +
                       " differs from other layers " + shape_str(other->shape()));
    }
  }
}

bool StateCache::initialized(std::size_t layer) const {
  check_layer(layer);
  return layers_[layer].has_value();
}

std::size_t StateCache::cached_len(std::size_t layer) const {
  return initialized(layer) ? layers_[layer]->dim(1) : 0;
}

const Tensor& StateCache::state(std::size_t layer) const {
  if (!initialized(layer)) {
    throw std::logic_error("state cache: layer " + std::to_string(layer) +
                           " is uninitialized");
  }
  return *layers_[layer];
}

void StateCache::init(std::size_t layer, const Tensor& x_normed) {
  if (initialized(layer)) {
    throw std::logic_error("state cache: layer " + std::to_string(layer) +
                           " initialized twice");
  }
  check_compatible(x_normed, "cache init");
  layers_[layer] = x_normed;
}

void StateCache::extend(std::size_t layer, const Tensor& x_normed) {
  const Tensor& current = state(layer);
  check_compatible(x_normed, "cache extend");
  const std::size_t batch = current.dim(0), len = current.dim(1), d = current.dim(2);
  const std::size_t s = x_normed.dim(1);
  if (s <= len) return;
  Tensor grown({batch, s, d});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < s; ++p) {
      const auto src = p < len ? current.row(b * len + p) : x_normed.row(b * s + p);
      std::copy(src.begin(), src.end(), grown.row(b * s + p).begin());
    }
  }
  layers_[layer] = std::move(grown);
}

void StateCache::update(std::size_t layer, const Tensor& out, Alignment alignment) {
  const Tensor& current = state(layer);
  check_compatible(out, "cache update");
  if (out.shape() == current.shape()) {
    layers_[layer] = out;
    return;
  }
  const std::size_t batch = current.dim(0), len = current.dim(1);
  const std::size_t s = out.dim(1);
  if (s > len) {
    throw ShapeError("cache update: " + std::to_string(s) + " rows do not fit in " +
                     std::to_string(len) + " cached rows");
  }
  const std::size_t first = alignment == Alignment::tail ? len - s : 0;
  Tensor& target = *layers_[layer];
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < s; ++p) {
      const auto src = out.row(b * s + p);
      std::copy(src.begin(), src.end(), target.row(b * len + first + p).begin());
    }
  }
}

void StateCache::reset() {
  for (auto& l : layers_) l.reset();
}

Tensor cache_blend(const Tensor& h, const StateCache& cache, std::size_t layer,
                   float alpha, std::span<const float> norm_gain, float eps,
                   Alignment alignment) {
  if (!cache.initialized(layer)) {
    throw std::logic_error("cache_blend: layer " + std::to_string(layer) +
                           " is uninitialized (empty cache)");
  }
  const Tensor& c = cache.state(layer);
  if (h.rank() != 3 || h.dim(0) != c.dim(0) || h.dim(2) != c.dim(2)) {
    throw ShapeError("cache_blend: h " + shape_str(h.shape()) + " incompatible with cache " +
                     shape_str(c.shape()));
  }
  const std::size_t batch = h.dim(0), s = h.dim(1), len = c.dim(1);
  if (len == 0) throw std::logic_error("cache_blend: empty cache");
  if (alignment == Alignment::head && len < s) {
    throw ShapeError("cache_blend: head slice has " + std::to_string(len) +
                     " rows, need " + std::to_string(s));
  }

  // Rows [h_first, s) of h pair with cache rows [c_first, c_first + n).
  const std::size_t n = std::min(len, s);
  const std::size_t h_first = s - n;
  const std::size_t c_first = alignment == Alignment::tail ? len - n : 0;

  Tensor slice({batch, n, c.dim(2)});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < n; ++p) {
      const auto src = c.row(b * len + c_first + p);
      std::copy(src.begin(), src.end(), slice.row(b * n + p).begin());
    }
  }
  const Tensor normed = kernels::rms_norm(slice, norm_gain, eps);
  require_finite(h, "cache_blend h");

  // keep * h + 0 * c would turn -0.0 into +0.0; alpha 0 must be exact.
  if (alpha == 0.0f) return h;
  const float keep = 1.0f - alpha;
  Tensor out = h;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t p = 0; p < n; ++p) {
      auto dst = out.row(b * s + h_first + p);
      const auto cached = normed.row(b * n + p);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = keep * dst[i] + alpha * cached[i];
    }
  }
  return out;
}

Tensor block_forward_sst(const Tensor& x, std::size_t layer, KVCache& kv, StateCache& state,
                         std::size_t start_pos, const AttentionMask& mask,
                         const WeightBundle& weights, const ModelConfig& cfg,
                         const StreamConfig& stream, const ForwardProbe* probe) {
  const LayerWeights w = weights.layer(layer);
  const Tensor x_normed = kernels::rms_norm(x, w.attention_norm, cfg.norm_eps);
  const Tensor h =
      kernels::add(x, attention_block(x_normed, layer, kv, start_pos, mask, weights, cfg));

  if (!state.initialized(layer)) {
    state.init(layer, x_normed);
  } else if (state.cached_len(layer) < x.dim(1)) {
    state.extend(layer, x_normed);
  }

  const std::vector<float> unit(cfg.d_model, 1.0f);
  const std::span<const float> gain =
      stream.cache_norm == CacheNorm::unit ? std::span<const float>(unit) : w.ffn_norm.data();
  const Tensor h_blend =
      cache_blend(h, state, layer, stream.alpha, gain, cfg.norm_eps, stream.alignment);
  if (probe && probe->on_residual) probe->on_residual(layer, h_blend);

  Tensor out = kernels::add(
      h_blend, ffn_swiglu(kernels::rms_norm(h_blend, w.ffn_norm, cfg.norm_eps), w));
  state.update(layer, out, stream.alignment);
  if (probe && probe->on_block_output) probe->on_block_output(layer, out);
  return out;
}

Tensor forward_sst(std::span<const TokenId> tokens, KVCache& kv, StateCache& state,
                   std::size_t start_pos, const WeightBundle& weights, const ModelConfig& cfg,
                   const StreamConfig& stream, const ForwardProbe* probe) {
  stream.validate();
  if (state.n_layers() != cfg.n_layers) {
    throw std::invalid_argument("forward_sst: state cache has " +
                                std::to_string(state.n_layers()) + " layers, model has " +
                                std::to_string(cfg.n_layers));
  }
  return run_decoder(tokens, kv, start_pos, weights, cfg,
                     [&](const Tensor& x, std::size_t layer, const AttentionMask& mask) {
                       return block_forward_sst(x, layer, kv, state, start_pos, mask,
                                                weights, cfg, stream, probe);
                     });
}

std::uint64_t cache_overhead(std::uint64_t n_tokens, std::uint64_t d_model,
                             std::uint64_t n_layers, std::uint64_t bytes_per_value) {
  if (n_tokens == 0 || d_model == 0 || n_layers == 0 || bytes_per_value == 0) return 0;
  std::uint64_t total = 1;
  for (std::uint64_t factor : {n_tokens, d_model, n_layers, bytes_per_value}) {
    if (total > std::numeric_limits<std::uint64_t>::max() / factor) {
      throw std::overflow_error("cache_overhead: byte count overflows 64 bits");
    }
    total *= factor;
  }
  return total;
}

}  // namespace sst
