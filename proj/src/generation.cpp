#include "sst/generation.hpp"

#include <algorithm>
#include <atomic>
#include <stdexcept>

#include "sst/hash.hpp"
#include "sst/kernels.hpp"

namespace sst {

namespace {

std::atomic<std::uint64_t> next_serial{1};

Tensor last_row(const Tensor& logits) {
  const auto row = logits.row(logits.row_count() - 1);
  return Tensor({row.size()}, std::vector<float>(row.begin(), row.end()));
}

}  // namespace

std::string_view to_string(Mode mode) { return mode == Mode::base ? "base" : "sst"; }

Mode parse_mode(std::string_view text) {
  if (text == "base") return Mode::base;
  if (text == "sst") return Mode::sst;
  throw std::invalid_argument("mode must be 'base' or 'sst', got '" + std::string(text) + "'");
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::max_tokens: return "max_tokens";
    case StopReason::stop_id: return "stop_id";
    case StopReason::attractor: return "attractor";
    case StopReason::context_full: return "context_full";
  }
  return "unknown";
}

void GenerationConfig::validate() const {
  if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
  stream.validate();
}

std::string config_fingerprint(const ModelConfig& cfg, const GenerationConfig& gen,
                               std::uint64_t weights_hash) {
  Fnv1a h;
  h.update(format_config(cfg));
  h.update(to_string(gen.mode));
  h.update_pod(gen.stream.alpha);
  h.update_pod(static_cast<std::uint64_t>(gen.stream.recursions));
  h.update(to_string(gen.stream.alignment));
  h.update(to_string(gen.stream.cache_norm));
  h.update_pod(gen.seed);
  h.update_pod(weights_hash);
  return hex64(h.digest());
}

Session::Session(const ModelConfig& cfg, const WeightBundle& weights, GenerationConfig gen)
    : cfg_(&cfg),
      weights_(&weights),
      gen_(std::move(gen)),
      kv_(cfg),
      state_(cfg.n_layers),
      serial_(next_serial.fetch_add(1)) {
  gen_.validate();
}

bool Session::fresh() const {
  if (kv_.cur_pos() != 0 || steps_ != 0 || pending_) return false;
  for (std::size_t l = 0; l < state_.n_layers(); ++l) {
    if (state_.initialized(l)) return false;
  }
  return true;
}

void Session::reset() {
  kv_.reset();
  state_.reset();
  steps_ = 0;
  pending_.reset();
}

struct SessionAccess {
  // One forward pass over `tokens` at the frozen cur_pos. Returns the
  // last-position logits.
  static Tensor run_pass(Session& s, std::span<const TokenId> tokens, std::size_t pass) {
    const ModelConfig& cfg = *s.cfg_;
    const std::size_t start_pos = s.kv_.cur_pos();
    const std::size_t step = s.steps_;
    TraceSink* sink = s.gen_.trace;

    ForwardProbe probe;
    probe.on_residual = s.probe_.on_residual;
    probe.on_block_output = [&](std::size_t layer, const Tensor& out) {
      if (sink) {
        const auto& wanted = sink->selection().layers;
        const bool selected = wanted.empty()
                                  ? layer + 1 == cfg.n_layers
                                  : std::find(wanted.begin(), wanted.end(), layer) != wanted.end();
        if (selected) {
          const std::size_t rows = out.dim(1);
          const std::size_t first = sink->selection().all_positions ? 0 : rows - 1;
          for (std::size_t r = first; r < rows; ++r) {
            sink->record(TraceKey{step, pass, layer, start_pos + r}, out.row(r));
          }
        }
      }
      if (s.probe_.on_block_output) s.probe_.on_block_output(layer, out);
    };

    const Tensor logits =
        s.gen_.mode == Mode::base
            ? forward_base(tokens, s.kv_, start_pos, *s.weights_, cfg, &probe)
            : forward_sst(tokens, s.kv_, s.state_, start_pos, *s.weights_, cfg,
                          s.gen_.stream, &probe);
    if (s.pass_observer_) s.pass_observer_(s, step, pass);
    return last_row(logits);
  }

  static StepResult run_step(Session& s, std::span<const TokenId> tokens) {
    StepResult result;
    const std::size_t passes = 1 + s.gen_.stream.recursions;
    result.pass_logits.reserve(passes);
    for (std::size_t pass = 0; pass < passes; ++pass) {
      result.pass_logits.push_back(run_pass(s, tokens, pass));
    }
    s.kv_.advance(tokens.size());
    result.token = static_cast<TokenId>(kernels::argmax_greedy(result.final_logits().data()));
    s.pending_ = result.token;
    ++s.steps_;
    return result;
  }
};

StepResult prefill(std::span<const TokenId> prompt, Session& session) {
  if (prompt.empty()) throw std::invalid_argument("prefill: empty prompt (prepend BOS)");
  if (!session.fresh()) throw std::logic_error("prefill: session is not fresh");
  if (prompt.size() > session.config().max_seq) {
    throw std::out_of_range("prefill: prompt of " + std::to_string(prompt.size()) +
                            " tokens exceeds max_seq " +
                            std::to_string(session.config().max_seq));
  }
  return SessionAccess::run_step(session, prompt);
}

StepResult decode_step(Session& session) {
  const auto input = session.pending_input();
  if (!input) throw std::logic_error("decode_step: session has not been prefilled");
  if (session.kv().cur_pos() >= session.config().max_seq) {
    throw std::out_of_range("decode_step: context is full (" +
                            std::to_string(session.kv().cur_pos()) + " positions)");
  }
  const TokenId token = *input;
  return SessionAccess::run_step(session, std::span<const TokenId>(&token, 1));
}

GenerationResult generate(std::span<const TokenId> prompt, Session& session) {
  session.reset();
  const GenerationConfig& gen = session.generation();
  GenerationResult result;

  auto accept = [&](StepResult step) {
    result.tokens.push_back(step.token);
    result.step_logits.push_back(std::move(step.pass_logits.back()));
    if (std::find(gen.stop_ids.begin(), gen.stop_ids.end(), step.token) != gen.stop_ids.end()) {
      result.stop = StopReason::stop_id;
      return false;
    }
    result.repetition = detect_repetition(result.tokens, gen.repetition);
    if (gen.abort_on_attractor && result.repetition.kind == RepetitionKind::attractor) {
      result.stop = StopReason::attractor;
      return false;
    }
    return true;
  };

  bool running = accept(prefill(prompt, session));
  while (running && result.tokens.size() < gen.max_new_tokens) {
    if (session.kv().cur_pos() >= session.config().max_seq) {
      result.stop = StopReason::context_full;
      break;
    }
    running = accept(decode_step(session));
  }
  if (running && result.tokens.size() >= gen.max_new_tokens) result.stop = StopReason::max_tokens;
  result.repetition = detect_repetition(result.tokens, gen.repetition);
  return result;
}

GenerationResult generate(std::span<const TokenId> prompt, const ModelConfig& cfg,
                          const WeightBundle& weights, const GenerationConfig& gen) {
  Session session(cfg, weights, gen);
  return generate(prompt, session);
}

std::vector<TokenId> encode_prompt(std::string_view text) {
  std::vector<TokenId> ids{ByteTokenizer::kBos};
  const auto bytes = ByteTokenizer::encode(text);
  ids.insert(ids.end(), bytes.begin(), bytes.end());
  return ids;
}

}  // namespace sst
