// Acceptance suite. One line per criterion:
//   PASS|FAIL  <id>  <measured values>  (limit ...)
// Exit status is non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sst/commands.hpp"
#include "sst/generation.hpp"
#include "sst/hash.hpp"
#include "sst/kernels.hpp"
#include "sst/model.hpp"
#include "sst/repetition.hpp"
#include "sst/state_stream.hpp"
#include "sst/trace.hpp"
#include "sst/two_phase.hpp"

#include "../unit/oracles.hpp"

using namespace sst;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and limits.
constexpr double kKernelTol = 1e-6;
constexpr double kAttentionTol = 1e-5;
constexpr double kPrefillDecodeTol = 1e-5;
constexpr double kAlphaZeroSeconds = 10.0;
constexpr double kDeterminismSeconds = 60.0;
constexpr double kEvolutionSeconds = 30.0;
constexpr double kTwoPhaseSeconds = 60.0;
constexpr double kEvolutionFraction = 0.90;
constexpr double kBlendRmsRatio = 3.0;

const fs::path kAssets = SST_ASSETS_DIR;

int failures = 0;

void report(bool ok, const std::string& id, const std::string& detail) {
  std::printf("%s  %-28s %s\n", ok ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

// Runs a criterion body, turning exceptions into a failure line.
void criterion(const std::string& id, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(false, id, std::string("exception: ") + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

struct Toy {
  ModelConfig cfg;  // d_model 64, 4 layers
  WeightBundle weights = init_random_weights(cfg, 1);
};

const Toy& toy() {
  static const Toy t;
  return t;
}

GenerationConfig open_gen(Mode mode, float alpha, std::size_t r, std::size_t n) {
  GenerationConfig g;
  g.mode = mode;
  g.stream.alpha = alpha;
  g.stream.recursions = r;
  g.max_new_tokens = n;
  g.stop_ids.clear();
  g.abort_on_attractor = false;
  return g;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Every regular file under dir, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

int run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  return cli::run(args, out, err);
}

// ---------------------------------------------------------------------------

void alpha_zero_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& t = toy();
  const auto prompt = encode_prompt("The state stream");
  const auto base = generate(prompt, t.cfg, t.weights, open_gen(Mode::base, 0.0f, 0, 240));
  const auto sst = generate(prompt, t.cfg, t.weights, open_gen(Mode::sst, 0.0f, 0, 240));
  bool logits_equal = base.step_logits.size() == sst.step_logits.size();
  for (std::size_t i = 0; logits_equal && i < base.step_logits.size(); ++i)
    logits_equal = bit_equal(base.step_logits[i], sst.step_logits[i]);
  const double secs = seconds_since(t0);
  const bool ok = base.tokens == sst.tokens && logits_equal && base.tokens.size() >= 200 &&
                  secs < kAlphaZeroSeconds;
  report(ok, "alpha0-equivalence",
         "tokens=" + std::to_string(base.tokens.size()) +
             " streams_equal=" + std::to_string(base.tokens == sst.tokens) +
             " logits_bit_equal=" + std::to_string(logits_equal) + " time=" +
             fmt("%.2fs", secs) + " (need >=200 tokens, exact, <10s)");
}

void determinism(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path weights = work / "toy.sstw";
  const fs::path cfg = kAssets / "toy.cfg";
  if (run_cli({"init", "--config", cfg.string(), "--weights", weights.string()}) != 0)
    throw std::runtime_error("init failed");

  std::size_t invocations = 0, mismatched = 0;
  for (const char* mode : {"base", "sst"}) {
    for (const char* alpha : {"0", "0.027"}) {
      for (const char* r : {"0", "2", "4"}) {
        std::map<std::string, std::string> first;
        for (int rep = 0; rep < 2; ++rep) {
          const fs::path dir = work / "det" / (std::string(mode) + "_" + alpha + "_" + r) /
                               std::to_string(rep);
          fs::remove_all(dir);
          fs::create_directories(dir);
          const int code = run_cli({"trace", "--config", cfg.string(), "--weights",
                                    weights.string(), "--mode", mode, "--alpha", alpha,
                                    "--recursions", r, "--prompt-file",
                                    (kAssets / "prompts/joke.txt").string(), "--max-tokens",
                                    "40", "--out", (dir / "generate.txt").string(),
                                    "--trace-out", (dir / "trace.txt").string(), "--fc-out",
                                    (dir / "fc").string(), "--no-attractor-abort"});
          if (code != 0) throw std::runtime_error("trace invocation exited " + std::to_string(code));
          auto files = snapshot(dir);
          if (rep == 0) first = std::move(files);
          else if (files != first) ++mismatched;
        }
        ++invocations;
      }
    }
  }
  const double secs = seconds_since(t0);
  report(mismatched == 0 && secs < kDeterminismSeconds, "determinism",
         "invocations=" + std::to_string(invocations) + " mismatched=" +
             std::to_string(mismatched) + " time=" + fmt("%.2fs", secs) +
             " (byte-identical files, <60s)");
}

// Per-step comparison of the final-layer state across passes.
struct PassStats {
  std::size_t steps = 0;
  std::size_t steps_all_identical = 0;
  std::size_t steps_any_differs = 0;
  std::size_t steps_each_pass_differs = 0;
};

PassStats pass_stats(Mode mode, float alpha, std::size_t r, std::size_t n) {
  const auto& t = toy();
  std::vector<std::size_t> all_dims(t.cfg.d_model);
  for (std::size_t i = 0; i < all_dims.size(); ++i) all_dims[i] = i;
  TraceSink sink(all_dims);
  auto g = open_gen(mode, alpha, r, n);
  g.trace = &sink;
  generate(encode_prompt("Please give me a very punny joke"), t.cfg, t.weights, g);

  std::map<std::size_t, std::vector<const TraceEvent*>> by_step;
  for (const auto& e : sink.events()) by_step[e.key.step].push_back(&e);
  PassStats s;
  for (const auto& [step, events] : by_step) {
    ++s.steps;
    bool any = false, each = true;
    for (std::size_t p = 1; p < events.size(); ++p) {
      const bool differs_from_first = events[p]->values != events[0]->values;
      const bool differs_from_prev = events[p]->values != events[p - 1]->values;
      any = any || differs_from_first;
      each = each && differs_from_prev;
    }
    if (events.size() != r + 1) throw std::runtime_error("unexpected pass count in trace");
    if (!any) ++s.steps_all_identical;
    if (any) ++s.steps_any_differs;
    if (each) ++s.steps_each_pass_differs;
  }
  return s;
}

void base_recursion_invariance() {
  const PassStats s = pass_stats(Mode::base, 0.027f, 4, 50);
  report(s.steps == 50 && s.steps_all_identical == s.steps, "base-recursion-invariance",
         "steps=" + std::to_string(s.steps) + " identical_steps=" +
             std::to_string(s.steps_all_identical) + " (all 5 slices bit-identical every step)");
}

void sst_state_evolution() {
  const auto t0 = std::chrono::steady_clock::now();
  const PassStats s = pass_stats(Mode::sst, kDefaultAlpha, 4, 50);
  const double secs = seconds_since(t0);
  const double frac = s.steps ? double(s.steps_any_differs) / double(s.steps) : 0.0;
  report(s.steps == 50 && frac >= kEvolutionFraction && secs < kEvolutionSeconds,
         "sst-state-evolution",
         "steps=" + std::to_string(s.steps) + " differing=" + std::to_string(s.steps_any_differs) +
             fmt(" (%.1f%%)", 100.0 * frac) + " every_pass_differs=" +
             std::to_string(s.steps_each_pass_differs) + " time=" + fmt("%.2fs", secs) +
             " (need >=90%, <30s)");
}

void memory_formula() {
  const auto one = cache_overhead(1, 4096, 32, 2);
  const auto ctx = cache_overhead(2048, 4096, 32, 2);
  report(one == 262144 && ctx == 536870912, "memory-formula",
         "per_token=" + std::to_string(one) + " ctx2048=" + std::to_string(ctx) +
             " (exact 262144 / 536870912)");
}

void kernel_oracles() {
  oracle::Uniform rng(2024);
  double mm = 0, mm_wide = 0, rms = 0, sm = 0, si = 0, rp = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + inst % 4, k = 1 + (inst * 7) % 64, m = 1 + (inst * 5) % 48;
    const Tensor a = rng.tensor({n, k});
    const Tensor b = rng.tensor({k, m});
    const Tensor c = kernels::matmul(a, b);
    // Naive triple loop in f32, same accumulation order as the kernel.
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        float acc = 0.0f;
        for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * m + j];
        mm = std::max(mm, double(std::fabs(acc - c[i * m + j])));
      }
    // Distance to the exact product, reported only.
    const auto wide = oracle::matmul(oracle::to_mat(a), oracle::to_mat(b));
    for (std::size_t i = 0; i < n; ++i)
      mm_wide = std::max(mm_wide, oracle::max_abs_diff(wide[i], c.row(i)));

    const std::size_t d = 2 + (inst * 3) % 127;
    const Tensor x = rng.tensor({1, d}, -4.0f, 4.0f);
    const Tensor g = rng.tensor({d}, 0.5f, 1.5f);
    const std::vector<double> xd(x.data().begin(), x.data().end());
    rms = std::max(rms, oracle::max_abs_diff(oracle::rms_norm(xd, oracle::vec(g), 1e-5),
                                             kernels::rms_norm(x, g, 1e-5f).data()));
    const Tensor logits = rng.tensor({1, d}, -30.0f, 30.0f);
    sm = std::max(sm, oracle::max_abs_diff(
                          oracle::softmax(std::vector<double>(logits.data().begin(),
                                                              logits.data().end())),
                          kernels::softmax_rows(logits).data()));
    const Tensor sx = rng.tensor({1, d}, -8.0f, 8.0f);
    const Tensor sy = kernels::silu(sx);
    for (std::size_t i = 0; i < d; ++i)
      si = std::max(si, std::fabs(oracle::silu(sx[i]) - sy[i]));

    const std::size_t hd = 2 * (1 + inst % 32), pos = (inst * 131) % 512;
    const Tensor q = rng.tensor({1, 1, hd});
    rp = std::max(rp, oracle::max_abs_diff(
                          oracle::rope(oracle::vec(q), pos, 10000.0),
                          kernels::rope_apply(q, pos, 10000.0).data()));
  }

  // Attention against the head-materializing oracle, at several group sizes.
  double att = 0;
  for (std::size_t kv_heads : {1u, 2u, 4u}) {
    ModelConfig cfg;
    cfg.n_kv_heads = kv_heads;
    const WeightBundle w = init_random_weights(cfg, 10 + kv_heads);
    const Tensor x = rng.tensor({1, 12, cfg.d_model});
    KVCache kv(cfg);
    const Tensor out = attention_block(x, 2, kv, 0, AttentionMask::causal(12, 0), w, cfg);
    const auto ref = oracle::attention(oracle::to_mat(x), w, 2, cfg);
    for (std::size_t p = 0; p < 12; ++p)
      att = std::max(att, oracle::max_abs_diff(ref[p], out.row(p)));
  }

  // Prefill/decode equivalence on the toy model.
  const auto& t = toy();
  const auto ids = encode_prompt("prefill and decode agree");
  KVCache full_kv(t.cfg);
  const Tensor full = forward_base(ids, full_kv, 0, t.weights, t.cfg);
  KVCache kv(t.cfg);
  const std::size_t split = 6;
  forward_base(std::span(ids).first(split), kv, 0, t.weights, t.cfg);
  kv.advance(split);
  double pd = 0;
  for (std::size_t p = split; p < ids.size(); ++p) {
    const Tensor step = forward_base(std::span(ids).subspan(p, 1), kv, p, t.weights, t.cfg);
    kv.advance(1);
    for (std::size_t v = 0; v < t.cfg.vocab_size; ++v)
      pd = std::max(pd, double(std::fabs(step[v] - full[p * t.cfg.vocab_size + v])));
  }

  const bool ok = mm <= kKernelTol && rms <= kKernelTol && sm <= kKernelTol &&
                  si <= kKernelTol && rp <= kKernelTol && att <= kAttentionTol &&
                  pd <= kPrefillDecodeTol;
  report(ok, "kernel-oracles",
         fmt("matmul=%.2e", mm) + fmt(" matmul_vs_exact=%.2e", mm_wide) + fmt(" rms_norm=%.2e", rms) + fmt(" softmax=%.2e", sm) +
             fmt(" silu=%.2e", si) + fmt(" rope=%.2e", rp) + fmt(" attention=%.2e", att) +
             fmt(" prefill_decode=%.2e", pd) + " (1e-6 kernels, 1e-5 attention/prefill)");
}

void frozen_recursion() {
  const auto& t = toy();
  Session s(t.cfg, t.weights, open_gen(Mode::sst, kDefaultAlpha, 4, 1));
  prefill(encode_prompt("frozen recursion"), s);
  std::size_t steps = 0, bad_hash = 0, bad_pos = 0, bad_advance = 0, passes = 0;
  std::uint64_t expected_hash = 0;
  std::size_t expected_pos = 0;
  s.set_pass_observer([&](const Session& sess, std::size_t, std::size_t) {
    ++passes;
    if (sess.kv().cur_pos() != expected_pos) ++bad_pos;
    if (sess.kv().prefix_hash(expected_pos) != expected_hash) ++bad_hash;
  });
  for (; steps < 30; ++steps) {
    expected_pos = s.kv().cur_pos();
    expected_hash = s.kv().prefix_hash(expected_pos);
    decode_step(s);
    if (s.kv().cur_pos() != expected_pos + 1) ++bad_advance;
  }
  report(bad_hash == 0 && bad_pos == 0 && bad_advance == 0 && passes == steps * 5,
         "frozen-recursion",
         "steps=" + std::to_string(steps) + " passes=" + std::to_string(passes) +
             " prefix_hash_changes=" + std::to_string(bad_hash) + " cur_pos_moves=" +
             std::to_string(bad_pos) + " bad_advances=" + std::to_string(bad_advance));
}

void repetition_detector() {
  const TokenId the = 7, i = 1, am = 2, x = 3;
  const auto direct = detect_repetition(std::vector<TokenId>{the, the, the});
  const auto cyclic =
      detect_repetition(std::vector<TokenId>{50, i, am, x, i, am, x, i, am, x});
  std::vector<TokenId> run(40, 9);
  const auto attractor = detect_repetition(run);
  std::vector<TokenId> distinct(64);
  for (TokenId k = 0; k < 64; ++k) distinct[k] = k;
  const auto none = detect_repetition(distinct);
  const bool ok = direct.kind == RepetitionKind::direct && direct.period == 1 &&
                  cyclic.kind == RepetitionKind::cyclic && cyclic.period == 3 &&
                  attractor.kind == RepetitionKind::attractor &&
                  none.kind == RepetitionKind::none;
  report(ok, "repetition-detector",
         "the_the_the=" + std::string(to_string(direct.kind)) + "/p" +
             std::to_string(direct.period) + " i_am_x=" + std::string(to_string(cyclic.kind)) +
             "/p" + std::to_string(cyclic.period) + " run40=" +
             std::string(to_string(attractor.kind)) + " distinct64=" +
             std::string(to_string(none.kind)));
}

void two_phase(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& t = toy();

  // Stub evaluator: even items pass, odd items fail.
  std::vector<EvalItem> items;
  for (int k = 0; k < 6; ++k) items.push_back({"s" + std::to_string(k), "item " + std::to_string(k)});
  const Evaluator stub = [](std::size_t index, const std::string& out) {
    return Verdict{out.substr(0, 3), index % 2 == 0};
  };
  const std::uint64_t zero_kv_hash = KVCache(t.cfg).prefix_hash(t.cfg.max_seq);
  std::map<std::pair<std::size_t, int>, int> runs;
  std::set<std::uint64_t> serials;
  std::size_t not_fresh = 0, wrong_r = 0, dirty_kv = 0;
  TwoPhaseConfig phases;
  phases.on_session_start = [&](const Session& s, std::size_t index, int phase) {
    ++runs[{index, phase}];
    serials.insert(s.serial());
    if (!s.fresh()) ++not_fresh;
    if (s.kv().prefix_hash(t.cfg.max_seq) != zero_kv_hash) ++dirty_kv;
    if (s.generation().stream.recursions != (phase == 1 ? 2u : 4u)) ++wrong_r;
  };
  const auto results =
      run_two_phase(items, stub, t.cfg, t.weights, open_gen(Mode::sst, kDefaultAlpha, 0, 8), phases);
  std::size_t retry_errors = 0, changed_errors = 0;
  for (std::size_t k = 0; k < items.size(); ++k) {
    const bool should_retry = k % 2 == 1;
    if (runs[{k, 1}] != 1 || runs[{k, 2}] != (should_retry ? 1 : 0)) ++retry_errors;
    if (results[k].retried() != should_retry) ++retry_errors;
    if (results[k].retried() &&
        results[k].changed != (results[k].phase1.verdict.answer != results[k].phase2->verdict.answer))
      ++changed_errors;
  }
  const std::size_t expected_sessions = items.size() + items.size() / 2;

  // Ten-item arithmetic set through the CLI, twice.
  const fs::path weights = work / "toy.sstw";
  const fs::path cfg = kAssets / "toy.cfg";
  std::string csv[2];
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path out = work / ("arith10_" + std::to_string(rep) + ".csv");
    const int code = run_cli({"bench", "--config", cfg.string(), "--weights", weights.string(),
                              "--tasks", (kAssets / "tasks/arith10.tsv").string(),
                              "--max-tokens", "16", "--out", out.string()});
    if (code != 0) throw std::runtime_error("bench exited " + std::to_string(code));
    csv[rep] = slurp(out);
  }
  std::size_t rows = 0;
  for (char c : csv[0]) rows += c == '\n';
  const double secs = seconds_since(t0);

  const bool ok = retry_errors == 0 && changed_errors == 0 && not_fresh == 0 && dirty_kv == 0 &&
                  wrong_r == 0 && serials.size() == expected_sessions && csv[0] == csv[1] &&
                  rows == 12 && secs < kTwoPhaseSeconds;
  report(ok, "two-phase-harness",
         "sessions=" + std::to_string(serials.size()) + "/" + std::to_string(expected_sessions) +
             " retry_errors=" + std::to_string(retry_errors) + " not_fresh=" +
             std::to_string(not_fresh + dirty_kv) + " wrong_r=" + std::to_string(wrong_r) +
             " changed_errors=" + std::to_string(changed_errors) +
             " arith10_identical=" + std::to_string(csv[0] == csv[1]) + " time=" +
             fmt("%.2fs", secs) + " (<60s)");
}

// Cumulative RMS of every residual row seen so far, sampled once per step.
std::vector<double> running_rms(Mode mode, float alpha, std::size_t n, std::size_t* tokens,
                                bool* finite) {
  const auto& t = toy();
  Session s(t.cfg, t.weights, open_gen(mode, alpha, 0, n));
  long double sum_sq = 0;
  std::size_t count = 0;
  *finite = true;
  ForwardProbe probe;
  probe.on_residual = [&](std::size_t, const Tensor& h) {
    for (float v : h.data()) {
      if (!std::isfinite(v)) *finite = false;
      sum_sq += (long double)v * v;
    }
    count += h.numel();
  };
  std::vector<double> per_step;
  s.set_probe(probe);
  s.set_pass_observer([&](const Session&, std::size_t, std::size_t) {
    per_step.push_back(static_cast<double>(std::sqrt(sum_sq / count)));
  });
  const auto result = generate(encode_prompt("Hi"), s);
  *tokens = result.tokens.size();
  for (const auto& l : result.step_logits)
    for (float v : l.data())
      if (!std::isfinite(v)) *finite = false;
  return per_step;
}

void blend_boundedness() {
  std::size_t base_tokens = 0, sst_tokens = 0;
  bool base_finite = false, sst_finite = false;
  const auto base = running_rms(Mode::base, 0.0f, 500, &base_tokens, &base_finite);
  const auto sst = running_rms(Mode::sst, kAlphaRangeHigh, 500, &sst_tokens, &sst_finite);
  double worst = 0;
  for (std::size_t i = 0; i < std::min(base.size(), sst.size()); ++i)
    worst = std::max(worst, sst[i] / base[i]);
  const bool ok = sst_tokens == 500 && base_tokens == 500 && sst_finite && base_finite &&
                  base.size() == sst.size() && worst <= kBlendRmsRatio;
  report(ok, "blend-boundedness",
         "tokens=" + std::to_string(sst_tokens) + " finite=" + std::to_string(sst_finite) +
             fmt(" max_running_rms_ratio=%.4f", worst) +
             fmt(" final_sst_rms=%.4f", sst.empty() ? 0.0 : sst.back()) +
             fmt(" final_base_rms=%.4f", base.empty() ? 0.0 : base.back()) + " (<=3x)");
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "sst_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  criterion("alpha0-equivalence", alpha_zero_equivalence);
  criterion("determinism", [&] { determinism(work); });
  criterion("base-recursion-invariance", base_recursion_invariance);
  criterion("sst-state-evolution", sst_state_evolution);
  criterion("memory-formula", memory_formula);
  criterion("kernel-oracles", kernel_oracles);
  criterion("frozen-recursion", frozen_recursion);
  criterion("repetition-detector", repetition_detector);
  criterion("two-phase-harness", [&] { two_phase(work); });
  criterion("blend-boundedness", blend_boundedness);

  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
