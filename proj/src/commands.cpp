#include "sst/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "sst/config.hpp"
#include "sst/fc_matrix.hpp"
#include "sst/generation.hpp"
#include "sst/hash.hpp"
#include "sst/state_stream.hpp"
#include "sst/tasks.hpp"
#include "sst/trace.hpp"
#include "sst/two_phase.hpp"
#include "sst/weights.hpp"

namespace sst::cli {

namespace fs = std::filesystem;

namespace {

struct RunOptions {
  std::string weights;
  std::string config;
  std::string weights_sst;
  std::string mode = "base";
  std::optional<float> alpha;
  std::optional<std::size_t> recursions;
  std::optional<std::string> alignment;
  std::optional<std::string> cache_norm;
  std::size_t max_tokens = 64;
  std::string prompt;
  std::string prompt_file;
  std::string trace_out;
  std::string fc_out;
  std::string out;
  std::uint64_t seed = 1;
  bool no_abort = false;
  bool trace_all_dims = false;
  std::size_t fc_window = 16;
};

struct Loaded {
  ModelConfig cfg;
  StreamConfig stream;
  WeightBundle weights;
  std::uint64_t weights_hash = 0;
};

// Anything thrown after flag parsing maps to exit code 2.
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw RuntimeFailure("write failed: " + path.string());
}

Loaded load_assets(const RunOptions& opt) {
  Loaded l;
  const ConfigEntries entries = read_config_file(opt.config);
  l.cfg = model_config_from(entries);
  l.stream = stream_config_from(entries);
  if (opt.alpha) l.stream.alpha = *opt.alpha;
  if (opt.recursions) l.stream.recursions = *opt.recursions;
  if (opt.alignment) l.stream.alignment = parse_alignment(*opt.alignment);
  if (opt.cache_norm) l.stream.cache_norm = parse_cache_norm(*opt.cache_norm);
  l.stream.validate();
  l.weights = load_weights(opt.weights, l.cfg);
  l.weights_hash = weights_hash(l.weights);
  return l;
}

std::string prompt_text(const RunOptions& opt) {
  if (!opt.prompt_file.empty()) return read_file(opt.prompt_file);
  return opt.prompt;
}

GenerationConfig generation_config(const RunOptions& opt, const Loaded& l, Mode mode) {
  GenerationConfig gen;
  gen.max_new_tokens = opt.max_tokens;
  gen.mode = mode;
  gen.stream = l.stream;
  gen.seed = opt.seed;
  gen.abort_on_attractor = !opt.no_abort;
  return gen;
}

std::string escape_bytes(std::string_view text) {
  std::string out;
  for (unsigned char c : text) {
    if (c == '\\') out += "\\\\";
    else if (c == '\n') out += "\\n";
    else if (c == '\t') out += "\\t";
    else if (c < 0x20 || c >= 0x7f) {
      char buf[5];
      std::snprintf(buf, sizeof(buf), "\\x%02x", c);
      out += buf;
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

std::string join_tokens(const std::vector<TokenId>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(tokens[i]);
  }
  return out;
}

std::string repetition_summary(const RepetitionReport& r) {
  return "repetition kind=" + std::string(to_string(r.kind)) +
         " period=" + std::to_string(r.period) + " run=" + std::to_string(r.run_length) +
         " onset=" + std::to_string(r.onset_index);
}

std::string stream_summary(const GenerationConfig& gen) {
  char alpha[32];
  std::snprintf(alpha, sizeof(alpha), "%.9g", static_cast<double>(gen.stream.alpha));
  return "mode=" + std::string(to_string(gen.mode)) + " alpha=" + alpha +
         " recursions=" + std::to_string(gen.stream.recursions) +
         " alignment=" + std::string(to_string(gen.stream.alignment)) +
         " seed=" + std::to_string(gen.seed);
}

std::string generation_record(const GenerationConfig& gen, const std::string& fingerprint,
                              const GenerationResult& result) {
  Fnv1a logits_hash;
  for (const auto& l : result.step_logits) logits_hash.update_pod(content_hash(l));
  std::string out = "# sst generate config=" + fingerprint + " " + stream_summary(gen) + "\n";
  out += "stop " + std::string(to_string(result.stop)) + "\n";
  out += repetition_summary(result.repetition) + "\n";
  out += "tokens " + join_tokens(result.tokens) + "\n";
  out += "logits_hash " + hex64(logits_hash.digest()) + "\n";
  out += "text " + escape_bytes(ByteTokenizer::decode(result.tokens)) + "\n";
  return out;
}

std::string fc_file_name(std::size_t step, std::size_t pass) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "fc_step%04zu_pass%zu.txt", step, pass);
  return buf;
}

// Writes one FC grid per (step, pass) whose window holds at least two
// samples. Returns the number of files written.
std::size_t write_fc_files(const TraceSink& sink, const fs::path& dir, std::size_t steps,
                           std::size_t passes, std::size_t layer, std::size_t window) {
  fs::create_directories(dir);
  std::size_t written = 0;
  for (std::size_t step = 0; step < steps; ++step) {
    for (std::size_t pass = 0; pass < passes; ++pass) {
      const auto samples = fc_window(sink, step, pass, layer, window);
      if (samples.size() < 2) continue;
      export_fc(fc_matrix(samples, sink.dims()), dir / fc_file_name(step, pass));
      ++written;
    }
  }
  return written;
}

std::vector<std::size_t> trace_dims(const RunOptions& opt, const ModelConfig& cfg) {
  if (!opt.trace_all_dims) return default_trace_dims(cfg.d_model);
  std::vector<std::size_t> dims(cfg.d_model);
  for (std::size_t i = 0; i < dims.size(); ++i) dims[i] = i;
  return dims;
}

int cmd_generate(const RunOptions& opt, std::ostream& out, std::ostream& err, bool require_trace) {
  const Loaded l = load_assets(opt);
  GenerationConfig gen = generation_config(opt, l, parse_mode(opt.mode));
  const std::string fingerprint = config_fingerprint(l.cfg, gen, l.weights_hash);

  // FC windows reach back into the prompt, so every prefill position of the
  // final layer is kept; the trace file still gets one row per pass.
  std::optional<TraceSink> sink;
  if (require_trace || !opt.trace_out.empty() || !opt.fc_out.empty()) {
    TraceSelection selection;
    selection.all_positions = !opt.fc_out.empty();
    sink.emplace(trace_dims(opt, l.cfg), fingerprint, selection);
    gen.trace = &*sink;
  }

  const auto prompt = encode_prompt(prompt_text(opt));
  const GenerationResult result = generate(prompt, l.cfg, l.weights, gen);

  out << ByteTokenizer::decode(result.tokens);
  out.flush();
  err << repetition_summary(result.repetition) << " stop=" << to_string(result.stop)
      << " tokens=" << result.tokens.size() << " " << stream_summary(gen)
      << " config=" << fingerprint << "\n";

  if (!opt.out.empty()) write_file(opt.out, generation_record(gen, fingerprint, result));
  if (sink && !opt.trace_out.empty()) export_trace(final_positions(*sink), opt.trace_out);
  if (sink && !opt.fc_out.empty()) {
    const std::size_t files =
        write_fc_files(*sink, opt.fc_out, result.tokens.size(), 1 + gen.stream.recursions,
                       l.cfg.n_layers - 1, opt.fc_window);
    err << "fc files=" << files << " dir=" << opt.fc_out << "\n";
  }
  return result.stop == StopReason::attractor ? kExitAttractor : kExitOk;
}

int cmd_compare(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  const Loaded l = load_assets(opt);
  if (!opt.weights_sst.empty()) {
    const WeightBundle other = load_weights(opt.weights_sst, l.cfg);
    if (weights_hash(other) != l.weights_hash) {
      throw RuntimeFailure(
          "refusing to compare: base and sst weight files differ (comparison requires "
          "identical weights)");
    }
  }
  const auto prompt = encode_prompt(prompt_text(opt));
  std::vector<std::size_t> all_dims(l.cfg.d_model);
  for (std::size_t i = 0; i < all_dims.size(); ++i) all_dims[i] = i;

  struct Run {
    GenerationConfig gen;
    TraceSink sink;
    GenerationResult result;
  };
  auto run_mode = [&](Mode mode) {
    Run r{generation_config(opt, l, mode), TraceSink(all_dims), {}};
    r.gen.trace = &r.sink;
    r.result = generate(prompt, l.cfg, l.weights, r.gen);
    return r;
  };
  const Run base = run_mode(Mode::base);
  const Run sst = run_mode(Mode::sst);

  const auto& a = base.result.tokens;
  const auto& b = sst.result.tokens;
  std::optional<std::size_t> divergence;
  for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
    if (i >= a.size() || i >= b.size() || a[i] != b[i]) {
      divergence = i;
      break;
    }
  }

  const std::size_t final_pass = l.stream.recursions;
  const TraceDiff diff =
      compare_traces(slice_pass(base.sink, final_pass), slice_pass(sst.sink, final_pass));
  std::vector<float> per_step(std::min(a.size(), b.size()), 0.0f);
  for (const auto& [key, v] : diff.per_key) {
    if (key.step < per_step.size()) per_step[key.step] = std::max(per_step[key.step], v);
  }

  std::ostringstream report;
  report << "# sst compare base=" << config_fingerprint(l.cfg, base.gen, l.weights_hash)
         << " sst=" << config_fingerprint(l.cfg, sst.gen, l.weights_hash) << " "
         << stream_summary(sst.gen) << "\n";
  if (divergence) {
    report << "first_divergence " << *divergence << "\n";
  } else {
    report << "first_divergence none (no divergence)\n";
  }
  report << "max_state_diff ";
  {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(diff.overall_max));
    report << buf << "\n";
  }
  for (std::size_t i = 0; i < per_step.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(per_step[i]));
    report << "step " << i << " state_diff " << buf << "\n";
  }
  report << "base_tokens " << join_tokens(a) << "\n";
  report << "sst_tokens " << join_tokens(b) << "\n";
  report << "base_text " << escape_bytes(ByteTokenizer::decode(a)) << "\n";
  report << "sst_text " << escape_bytes(ByteTokenizer::decode(b)) << "\n";

  out << report.str();
  if (!opt.out.empty()) write_file(opt.out, report.str());
  err << "base " << repetition_summary(base.result.repetition) << "\n"
      << "sst " << repetition_summary(sst.result.repetition) << "\n";
  return kExitOk;
}

int cmd_membudget(std::uint64_t tokens, std::uint64_t d_model, std::uint64_t layers,
                  std::uint64_t bytes, std::ostream& out) {
  out << membudget_report(tokens, d_model, layers, bytes);
  return kExitOk;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

struct BenchOptions {
  std::string tasks;
  std::size_t phase1_r = 2;
  std::size_t phase2_r = 4;
  std::size_t workers = 1;
};

int cmd_bench(const RunOptions& opt, const BenchOptions& bench, std::ostream& out,
              std::ostream& err) {
  const Loaded l = load_assets(opt);
  const TaskFile tasks = load_task_file(bench.tasks);
  for (const auto& w : tasks.warnings) err << "warning: " << w << "\n";

  std::vector<EvalItem> items;
  for (const auto& t : tasks.items) items.push_back(EvalItem{t.id, t.prompt});
  const Evaluator evaluate = [&](std::size_t index, const std::string& output) {
    const TaskItem& t = tasks.items.at(index);
    Verdict v;
    v.answer = extract_answer(output, t.extractor);
    v.correct = v.answer == t.expected;
    return v;
  };

  GenerationConfig gen = generation_config(opt, l, parse_mode(opt.mode));
  TwoPhaseConfig phases;
  phases.phase1_recursions = bench.phase1_r;
  phases.phase2_recursions = bench.phase2_r;
  phases.workers = bench.workers;
  const auto results = run_two_phase(items, evaluate, l.cfg, l.weights, gen, phases);
  const TwoPhaseSummary s = summarize(results);

  std::string csv =
      "id,phase1_answer,phase1_correct,retried,phase2_answer,phase2_correct,changed,error\n";
  for (const auto& r : results) {
    std::string error = r.phase1.error.value_or("");
    if (r.phase2 && r.phase2->error) error += (error.empty() ? "" : "; ") + *r.phase2->error;
    csv += csv_field(r.id) + "," + csv_field(r.phase1.verdict.answer) + "," +
           (r.phase1.verdict.correct ? "1" : "0") + "," + (r.retried() ? "1" : "0") + "," +
           (r.phase2 ? csv_field(r.phase2->verdict.answer) : "") + "," +
           (r.phase2 ? (r.phase2->verdict.correct ? "1" : "0") : "") + "," +
           (r.changed ? "1" : "0") + "," + csv_field(error) + "\n";
  }
  std::string aggregate = "# aggregate items=" + std::to_string(s.items) +
                          " phase1_correct=" + std::to_string(s.phase1_correct) +
                          " retries=" + std::to_string(s.retried) +
                          " corrected=" + std::to_string(s.corrected) +
                          " changed=" + std::to_string(s.changed) +
                          " errors=" + std::to_string(s.errors) + " phase1_r=" +
                          std::to_string(bench.phase1_r) + " phase2_r=" +
                          std::to_string(bench.phase2_r) + " " + stream_summary(gen) + "\n";
  csv += aggregate;

  if (opt.out.empty()) out << csv;
  else write_file(opt.out, csv);
  err << aggregate;
  return kExitOk;
}

int cmd_init(const std::string& config_path, const std::string& weights_path,
             std::uint64_t seed, std::ostream& err) {
  ModelConfig cfg;
  if (fs::exists(config_path)) {
    cfg = load_config(config_path);
  } else {
    save_config(cfg, config_path);
  }
  save_weights(init_random_weights(cfg, seed), weights_path);
  err << "wrote " << weights_path << " (seed " << seed << ")\n";
  return kExitOk;
}

void add_model_flags(CLI::App* app, RunOptions& opt) {
  app->add_option("--weights", opt.weights, "Weight container file")->required();
  app->add_option("--config", opt.config, "Model config file")->required();
  app->add_option("--mode", opt.mode, "base or sst")->check(CLI::IsMember({"base", "sst"}));
  app->add_option("--alpha", opt.alpha, "State stream strength in [0, 1]")
      ->check(CLI::Range(0.0, 1.0));
  app->add_option("--recursions", opt.recursions, "Extra passes per token");
  app->add_option("--alignment", opt.alignment, "Cache slice alignment: head or tail")
      ->check(CLI::IsMember({"head", "tail"}));
  app->add_option("--cache-norm", opt.cache_norm, "Cache norm gain: layer or unit")
      ->check(CLI::IsMember({"layer", "unit"}));
  app->add_option("--max-tokens", opt.max_tokens, "Tokens to emit")
      ->check(CLI::Range(std::size_t{1}, std::numeric_limits<std::size_t>::max()));
  auto* prompt = app->add_option("--prompt", opt.prompt, "Prompt text");
  app->add_option("--prompt-file", opt.prompt_file, "Read the prompt from a file")
      ->check(CLI::ExistingFile)
      ->excludes(prompt);
  app->add_option("--seed", opt.seed, "Seed recorded with the outputs");
  app->add_flag("--no-attractor-abort", opt.no_abort, "Keep generating through attractors");
  app->add_option("--out", opt.out, "Write the primary output to this file");
}

}  // namespace

std::string format_bytes(std::uint64_t bytes) {
  static constexpr const char* kUnits[] = {"B", "KB", "MB", "GB", "TB", "PB", "EB"};
  std::size_t unit = 0;
  std::uint64_t scale = 1;
  while (unit + 1 < std::size(kUnits) && bytes / scale >= 1024) {
    scale *= 1024;
    ++unit;
  }
  if (bytes % scale == 0) return std::to_string(bytes / scale) + " " + kUnits[unit];
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.2f %s",
                static_cast<double>(bytes) / static_cast<double>(scale), kUnits[unit]);
  return buf;
}

std::string membudget_report(std::uint64_t tokens, std::uint64_t d_model, std::uint64_t layers,
                             std::uint64_t bytes_per_value) {
  const std::uint64_t per_token = cache_overhead(1, d_model, layers, bytes_per_value);
  const std::uint64_t total = cache_overhead(tokens, d_model, layers, bytes_per_value);
  std::ostringstream out;
  out << "state cache: d_model=" << d_model << " layers=" << layers
      << " bytes/value=" << bytes_per_value << "\n"
      << "per-token: " << format_bytes(per_token) << "/token (" << per_token << " bytes)\n"
      << "total (" << tokens << " tokens): " << format_bytes(total) << " (" << total
      << " bytes)\n";
  return out.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"State-stream transformer toy inference engine"};
  app.require_subcommand(1);

  RunOptions gen_opt;
  auto* gen_cmd = app.add_subcommand("generate", "Greedy generation in base or sst mode");
  add_model_flags(gen_cmd, gen_opt);
  gen_cmd->add_option("--trace-out", gen_opt.trace_out, "Write the state trace here");
  gen_cmd->add_option("--fc-out", gen_opt.fc_out, "Directory for FC matrix files");
  gen_cmd->add_option("--fc-window", gen_opt.fc_window, "Positions per FC window")
      ->check(CLI::Range(std::size_t{2}, std::numeric_limits<std::size_t>::max()));
  gen_cmd->add_flag("--trace-all-dims", gen_opt.trace_all_dims, "Trace every dimension");

  RunOptions cmp_opt;
  cmp_opt.mode = "sst";
  auto* cmp_cmd = app.add_subcommand("compare", "Base vs sst on identical weights and prompt");
  add_model_flags(cmp_cmd, cmp_opt);
  cmp_cmd->add_option("--weights-sst", cmp_opt.weights_sst,
                      "Weights for the sst side; must match --weights");

  RunOptions trace_opt;
  auto* trace_cmd = app.add_subcommand("trace", "Generate with tracing; emit trace and FC files");
  add_model_flags(trace_cmd, trace_opt);
  trace_cmd->add_option("--trace-out", trace_opt.trace_out, "Trace file")->required();
  trace_cmd->add_option("--fc-out", trace_opt.fc_out, "Directory for FC matrix files")
      ->required();
  trace_cmd->add_option("--fc-window", trace_opt.fc_window, "Positions per FC window")
      ->check(CLI::Range(std::size_t{2}, std::numeric_limits<std::size_t>::max()));
  trace_cmd->add_flag("--trace-all-dims", trace_opt.trace_all_dims, "Trace every dimension");

  std::uint64_t mb_tokens = 1, mb_d_model = 4096, mb_layers = 32, mb_bytes = 2;
  auto* mb_cmd = app.add_subcommand("membudget", "State cache memory overhead");
  mb_cmd->add_option("--tokens", mb_tokens, "Tokens in context");
  mb_cmd->add_option("--d-model", mb_d_model, "Hidden size");
  mb_cmd->add_option("--layers", mb_layers, "Layer count");
  mb_cmd->add_option("--bytes", mb_bytes, "Bytes per value (2 = fp16)");

  RunOptions bench_opt;
  bench_opt.mode = "sst";
  BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench", "Two-phase retry benchmark over a task file");
  add_model_flags(bench_cmd, bench_opt);
  bench_cmd->add_option("--tasks", bench.tasks, "Task file")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--phase1-r", bench.phase1_r, "Recursions in phase 1");
  bench_cmd->add_option("--phase2-r", bench.phase2_r, "Recursions for retries");
  bench_cmd->add_option("--workers", bench.workers, "Worker threads")
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}));

  std::string init_config, init_weights;
  std::uint64_t init_seed = 1;
  auto* init_cmd = app.add_subcommand("init", "Write a toy config and seeded random weights");
  init_cmd->add_option("--config", init_config, "Config file (created if missing)")->required();
  init_cmd->add_option("--weights", init_weights, "Weight file to write")->required();
  init_cmd->add_option("--seed", init_seed, "Initialization seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_generate(gen_opt, out, err, false);
    if (*cmp_cmd) return cmd_compare(cmp_opt, out, err);
    if (*trace_cmd) return cmd_generate(trace_opt, out, err, true);
    if (*mb_cmd) return cmd_membudget(mb_tokens, mb_d_model, mb_layers, mb_bytes, out);
    if (*bench_cmd) return cmd_bench(bench_opt, bench, out, err);
    if (*init_cmd) return cmd_init(init_config, init_weights, init_seed, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace sst::cli
