#include "sst/two_phase.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

namespace sst {

namespace {

PhaseOutcome run_item(std::size_t index, const EvalItem& item, std::size_t recursions, int phase,
                      const Evaluator& evaluate, const ModelConfig& cfg,
                      const WeightBundle& weights, GenerationConfig gen,
                      const TwoPhaseConfig& phases) {
  PhaseOutcome outcome;
  outcome.recursions = recursions;
  gen.stream.recursions = recursions;
  gen.trace = nullptr;
  try {
    Session session(cfg, weights, gen);
    if (phases.on_session_start) phases.on_session_start(session, index, phase);
    const auto prompt = encode_prompt(item.prompt);
    GenerationResult result = generate(prompt, session);
    outcome.tokens = std::move(result.tokens);
    outcome.stop = result.stop;
    outcome.output = ByteTokenizer::decode(outcome.tokens);
  } catch (const std::exception& e) {
    outcome.error = std::string("generation: ") + e.what();
    return outcome;
  }
  try {
    outcome.verdict = evaluate(index, outcome.output);
  } catch (const std::exception& e) {
    outcome.verdict = Verdict{};
    outcome.error = std::string("evaluator: ") + e.what();
  }
  return outcome;
}

// Runs fn(i) for every i in `indices` on up to `workers` threads.
template <typename Fn>
void for_each_index(const std::vector<std::size_t>& indices, std::size_t workers, Fn fn) {
  workers = std::max<std::size_t>(1, std::min(workers, indices.size()));
  if (workers == 1) {
    for (auto i : indices) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next.fetch_add(1); k < indices.size(); k = next.fetch_add(1)) {
        fn(indices[k]);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

std::vector<ItemResult> run_two_phase(std::span<const EvalItem> items, const Evaluator& evaluate,
                                      const ModelConfig& cfg, const WeightBundle& weights,
                                      const GenerationConfig& gen, const TwoPhaseConfig& phases) {
  std::vector<ItemResult> results(items.size());
  std::vector<std::size_t> all(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    all[i] = i;
    results[i].id = items[i].id;
  }

  for_each_index(all, phases.workers, [&](std::size_t i) {
    results[i].phase1 = run_item(i, items[i], phases.phase1_recursions, 1, evaluate, cfg,
                                 weights, gen, phases);
  });

  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!results[i].phase1.verdict.correct) failed.push_back(i);
  }
  for_each_index(failed, phases.workers, [&](std::size_t i) {
    results[i].phase2 = run_item(i, items[i], phases.phase2_recursions, 2, evaluate, cfg,
                                 weights, gen, phases);
    results[i].changed = results[i].phase2->verdict.answer != results[i].phase1.verdict.answer;
  });
  return results;
}

TwoPhaseSummary summarize(std::span<const ItemResult> results) {
  TwoPhaseSummary s;
  s.items = results.size();
  for (const auto& r : results) {
    if (r.phase1.verdict.correct) ++s.phase1_correct;
    if (r.retried()) ++s.retried;
    if (r.retried() && r.phase2->verdict.correct) ++s.corrected;
    if (r.changed) ++s.changed;
    if (r.phase1.error || (r.phase2 && r.phase2->error)) ++s.errors;
  }
  return s;
}

}  // namespace sst
