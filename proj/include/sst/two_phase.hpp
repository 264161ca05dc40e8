#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sst/generation.hpp"

namespace sst {

struct EvalItem {
  std::string id;
  std::string prompt;
};

struct Verdict {
  std::string answer;  // what the evaluator extracted from the output
  bool correct = false;
};

// Judges the decoded output of item `index`. Must not depend on anything
// but its arguments. Exceptions are recorded against the item.
using Evaluator = std::function<Verdict(std::size_t index, const std::string& output)>;

struct PhaseOutcome {
  std::size_t recursions = 0;
  std::string output;
  std::vector<TokenId> tokens;
  Verdict verdict;
  std::optional<std::string> error;
  StopReason stop = StopReason::max_tokens;
};

struct ItemResult {
  std::string id;
  PhaseOutcome phase1;
  std::optional<PhaseOutcome> phase2;  // present iff the item was retried
  bool changed = false;                // phase-2 answer differs from phase 1

  bool retried() const { return phase2.has_value(); }
  bool final_correct() const {
    return phase2 ? phase2->verdict.correct : phase1.verdict.correct;
  }
};

struct TwoPhaseConfig {
  std::size_t phase1_recursions = 2;
  std::size_t phase2_recursions = 4;
  std::size_t workers = 1;
  // Called with each freshly built session before it runs; may be invoked
  // from worker threads.
  std::function<void(const Session&, std::size_t index, int phase)> on_session_start;
};

struct TwoPhaseSummary {
  std::size_t items = 0;
  std::size_t phase1_correct = 0;
  std::size_t retried = 0;
  std::size_t corrected = 0;  // wrong in phase 1, right in phase 2
  std::size_t changed = 0;
  std::size_t errors = 0;
};

// Every item runs once at phase1_recursions; each phase-1 failure runs
// again in a brand-new session at phase2_recursions, with nothing carried
// over. Results are in item order whatever the worker count.
std::vector<ItemResult> run_two_phase(std::span<const EvalItem> items, const Evaluator& evaluate,
                                      const ModelConfig& cfg, const WeightBundle& weights,
                                      const GenerationConfig& gen, const TwoPhaseConfig& phases);

TwoPhaseSummary summarize(std::span<const ItemResult> results);

}  // namespace sst
