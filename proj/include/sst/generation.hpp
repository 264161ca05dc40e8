#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sst/config.hpp"
#include "sst/kv_cache.hpp"
#include "sst/model.hpp"
#include "sst/repetition.hpp"
#include "sst/state_stream.hpp"
#include "sst/tokenizer.hpp"
#include "sst/trace.hpp"
#include "sst/weights.hpp"

namespace sst {

enum class Mode { base, sst };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

struct GenerationConfig {
  std::size_t max_new_tokens = 64;
  std::vector<TokenId> stop_ids = {ByteTokenizer::kEos};
  Mode mode = Mode::base;
  // recursions applies in both modes; alpha/alignment only in sst mode.
  StreamConfig stream;
  // Recorded for provenance. Greedy decoding never draws from it.
  std::uint64_t seed = 1;
  TraceSink* trace = nullptr;
  RepetitionThresholds repetition;
  bool abort_on_attractor = true;

  void validate() const;
};

// Stable fingerprint of everything that determines a token stream.
std::string config_fingerprint(const ModelConfig& cfg, const GenerationConfig& gen,
                               std::uint64_t weights_hash);

// Decoding state for one sequence: KV cache, state cache and step counter,
// sharing read-only weights. Single-threaded.
class Session {
 public:
  using PassObserver =
      std::function<void(const Session&, std::size_t step, std::size_t pass)>;

  Session(const ModelConfig& cfg, const WeightBundle& weights, GenerationConfig gen);

  const ModelConfig& config() const noexcept { return *cfg_; }
  const WeightBundle& weights() const noexcept { return *weights_; }
  const GenerationConfig& generation() const noexcept { return gen_; }

  KVCache& kv() noexcept { return kv_; }
  const KVCache& kv() const noexcept { return kv_; }
  StateCache& state() noexcept { return state_; }
  const StateCache& state() const noexcept { return state_; }

  // Unique per Session object within the process.
  std::uint64_t serial() const noexcept { return serial_; }
  // Tokens emitted so far; also the index of the next step.
  std::size_t steps() const noexcept { return steps_; }
  std::optional<TokenId> pending_input() const noexcept { return pending_; }
  // No context, no state, no steps.
  bool fresh() const;

  // Called after every forward pass, once the pass's writes are done.
  void set_pass_observer(PassObserver observer) { pass_observer_ = std::move(observer); }
  // Extra per-layer observation chained after tracing.
  void set_probe(ForwardProbe probe) { probe_ = std::move(probe); }

  void reset();

 private:
  friend struct SessionAccess;

  const ModelConfig* cfg_;
  const WeightBundle* weights_;
  GenerationConfig gen_;
  KVCache kv_;
  StateCache state_;
  std::uint64_t serial_;
  std::size_t steps_ = 0;
  std::optional<TokenId> pending_;
  PassObserver pass_observer_;
  ForwardProbe probe_;
};

struct StepResult {
  TokenId token = 0;
  // Last-position logits of every pass, in pass order (1 + recursions).
  std::vector<Tensor> pass_logits;

  const Tensor& final_logits() const { return pass_logits.back(); }
};

// Runs the prompt through 1 + r passes at cur_pos 0 and emits step 0 from
// the final pass. cur_pos advances to the prompt length once, afterwards.
// Requires a fresh session and a non-empty prompt.
StepResult prefill(std::span<const TokenId> prompt, Session& session);

// Feeds the last emitted token through 1 + r passes with cur_pos frozen,
// emits argmax of the final pass, then advances cur_pos by one.
StepResult decode_step(Session& session);

enum class StopReason { max_tokens, stop_id, attractor, context_full };

std::string_view to_string(StopReason reason);

struct GenerationResult {
  std::vector<TokenId> tokens;
  std::vector<Tensor> step_logits;  // final-pass logits per step
  RepetitionReport repetition;
  StopReason stop = StopReason::max_tokens;
};

// Resets the session, then prefill + decode until a stop id, max_new_tokens,
// a full context or (when enabled) an attractor.
GenerationResult generate(std::span<const TokenId> prompt, Session& session);
GenerationResult generate(std::span<const TokenId> prompt, const ModelConfig& cfg,
                          const WeightBundle& weights, const GenerationConfig& gen);

// BOS followed by the prompt bytes.
std::vector<TokenId> encode_prompt(std::string_view text);

}  // namespace sst
