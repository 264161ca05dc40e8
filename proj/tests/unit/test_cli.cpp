#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sst/commands.hpp"
#include "sst/hash.hpp"
#include "sst/tasks.hpp"

using namespace sst;
namespace fs = std::filesystem;

namespace {

const fs::path kAssets = SST_ASSETS_DIR;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string hash_of(std::string_view text) {
  Fnv1a h;
  h.update(text);
  return hex64(h.digest());
}

// Scratch directory holding the toy config and seed-1 weights.
struct Workspace {
  fs::path dir;
  fs::path cfg;
  fs::path weights;

  Workspace() {
    dir = fs::temp_directory_path() / "sst_cli_tests";
    fs::remove_all(dir);
    fs::create_directories(dir);
    cfg = kAssets / "toy.cfg";
    weights = dir / "toy.sstw";
    const auto r = run({"init", "--config", cfg.string(), "--weights", weights.string(),
                        "--seed", "1"});
    REQUIRE(r.code == cli::kExitOk);
  }

  std::vector<std::string> model_args() const {
    return {"--config", cfg.string(), "--weights", weights.string()};
  }
};

const Workspace& ws() {
  static const Workspace w;
  return w;
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::set<std::string> fc_hashes_for_step(const fs::path& dir, std::size_t step,
                                         std::size_t passes) {
  std::set<std::string> hashes;
  for (std::size_t p = 0; p < passes; ++p) {
    char name[64];
    std::snprintf(name, sizeof(name), "fc_step%04zu_pass%zu.txt", step, p);
    REQUIRE(fs::exists(dir / name));
    hashes.insert(hash_of(slurp(dir / name)));
  }
  return hashes;
}

}  // namespace

TEST_CASE("membudget") {
  const auto d = run({"membudget"});
  CHECK(d.code == 0);
  CHECK(d.out.find("256 KB/token") != std::string::npos);
  const auto big = run({"membudget", "--tokens", "2048"});
  CHECK(big.out.find("512 MB") != std::string::npos);
  const auto zero = run({"membudget", "--tokens", "0"});
  CHECK(zero.out.find("total (0 tokens): 0 B") != std::string::npos);
  CHECK(cli::format_bytes(1536ull * 1024 * 1024) == "1.50 GB");
}

TEST_CASE("usage errors exit 1") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  const auto bad_alpha = run(cat({"generate", "--alpha", "1.2", "--prompt", "x"},
                                 ws().model_args()));
  CHECK(bad_alpha.code == cli::kExitUsage);
  CHECK(bad_alpha.err.find("alpha") != std::string::npos);
  CHECK(run(cat({"generate", "--mode", "fast"}, ws().model_args())).code == cli::kExitUsage);
  CHECK(run({"generate", "--prompt", "x"}).code == cli::kExitUsage);  // missing files
}

TEST_CASE("runtime errors exit 2") {
  const auto r = run({"generate", "--config", ws().cfg.string(), "--weights",
                      (ws().dir / "missing.sstw").string(), "--prompt", "x"});
  CHECK(r.code == cli::kExitRuntime);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("generate golden output and alpha 0 identity") {
  const auto base_out = ws().dir / "gen_base.txt";
  const auto sst_out = ws().dir / "gen_sst0.txt";
  const std::vector<std::string> common = {"--prompt-file", (kAssets / "prompts/joke.txt").string(),
                                           "--max-tokens", "32", "--recursions", "0"};
  const auto base = run(cat(cat({"generate", "--mode", "base", "--alpha", "0", "--out",
                                 base_out.string()},
                                common),
                            ws().model_args()));
  REQUIRE(base.code == 0);
  CHECK(base.err.find("repetition kind=") != std::string::npos);
  const auto sst = run(cat(cat({"generate", "--mode", "sst", "--alpha", "0", "--out",
                                sst_out.string()},
                               common),
                           ws().model_args()));
  REQUIRE(sst.code == 0);
  CHECK(sst.out == base.out);

  // The record headers differ only in mode and fingerprint; the token lines must match.
  const auto body = [](const std::string& s) { return s.substr(s.find('\n') + 1); };
  CHECK(body(slurp(sst_out)) == body(slurp(base_out)));
  CHECK(hash_of(base.out) == "896a77a6882e911a");
  CHECK(hash_of(body(slurp(base_out))) == "2a3fe8ba0d39c8b6");
}

TEST_CASE("compare") {
  const std::vector<std::string> common = {"--prompt", "Hello", "--max-tokens", "24"};
  const auto zero = run(cat(cat({"compare", "--alpha", "0", "--recursions", "2"}, common),
                            ws().model_args()));
  REQUIRE(zero.code == 0);
  CHECK(zero.out.find("first_divergence none (no divergence)") != std::string::npos);
  CHECK(zero.out.find("max_state_diff 0\n") != std::string::npos);

  const auto live = run(cat(cat({"compare", "--alpha", "0.027", "--recursions", "2"}, common),
                            ws().model_args()));
  REQUIRE(live.code == 0);
  CHECK(live.out.find("first_divergence 6\n") != std::string::npos);

  const auto other = ws().dir / "other.sstw";
  REQUIRE(run({"init", "--config", ws().cfg.string(), "--weights", other.string(), "--seed",
               "2"})
              .code == 0);
  const auto refused = run(cat(cat({"compare", "--weights-sst", other.string()}, common),
                               ws().model_args()));
  CHECK(refused.code == cli::kExitRuntime);
  CHECK(refused.err.find("identical weights") != std::string::npos);
  const auto same = run(cat(cat({"compare", "--weights-sst", ws().weights.string()}, common),
                            ws().model_args()));
  CHECK(same.code == 0);
}

TEST_CASE("trace writes FC files per step and pass") {
  const auto run_trace = [](const std::string& mode, const std::string& r,
                            const std::string& tag) {
    const auto dir = ws().dir / ("fc_" + tag);
    const auto trace = ws().dir / ("trace_" + tag + ".txt");
    const auto res = run(cat({"trace", "--mode", mode, "--alpha", "0.027", "--recursions", r,
                              "--prompt", "Paint", "--max-tokens", "8", "--trace-out",
                              trace.string(), "--fc-out", dir.string()},
                             ws().model_args()));
    REQUIRE(res.code == 0);
    return std::pair{dir, trace};
  };

  const auto [base_dir, base_trace] = run_trace("base", "4", "base4");
  const auto [sst_dir, sst_trace] = run_trace("sst", "4", "sst4");
  for (std::size_t step = 0; step < 8; ++step) {
    CHECK(fc_hashes_for_step(base_dir, step, 5).size() == 1);
    CHECK(fc_hashes_for_step(sst_dir, step, 5).size() > 1);
  }
  // Trace file: header plus one row per (step, pass).
  const auto text = slurp(base_trace);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 8 * 5);

  const auto [one_dir, one_trace] = run_trace("sst", "0", "sst0");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(one_dir)) ++files;
  CHECK(files == 8);
}

TEST_CASE("task file parsing and extraction") {
  const auto f = parse_task_text(
      "# header\n"
      "a\tWhat is 2+2?\\n\t4\tlast-integer\n"
      "bad line without tabs\n"
      "b\tp\tq\tunknown\n"
      "a\tdup\t1\texact\n"
      "c\tq\\tr\t  x  \texact\n");
  REQUIRE(f.items.size() == 2);
  CHECK(f.items[0].prompt == "What is 2+2?\n");
  CHECK(f.items[1].prompt == "q\tr");
  CHECK(f.warnings.size() == 3);

  CHECK(extract_answer("so the answer is 42.", Extractor::last_integer) == "42");
  CHECK(extract_answer("a total of 1,234 apples", Extractor::last_integer) == "1234");
  CHECK(extract_answer("it fell to -7", Extractor::last_integer) == "-7");
  CHECK(extract_answer("no digits", Extractor::last_integer).empty());
  CHECK(extract_answer("  x \n", Extractor::exact) == "x");
}

TEST_CASE("bench results file is deterministic") {
  const auto a = ws().dir / "bench_a.csv";
  const auto b = ws().dir / "bench_b.csv";
  const std::vector<std::string> common = {"bench", "--tasks",
                                           (kAssets / "tasks/arith3.tsv").string(),
                                           "--max-tokens", "6"};
  REQUIRE(run(cat(cat(common, {"--out", a.string()}), ws().model_args())).code == 0);
  REQUIRE(run(cat(cat(common, {"--out", b.string(), "--workers", "3"}), ws().model_args()))
              .code == 0);
  const std::string csv = slurp(a);
  CHECK(csv == slurp(b));
  CHECK(csv.starts_with("id,phase1_answer,phase1_correct,retried,phase2_answer,"));
  CHECK(csv.find("# aggregate items=3") != std::string::npos);
  CHECK(hash_of(csv) == "6f6a68f34ef14638");

  const auto warn_file = ws().dir / "warn.tsv";
  std::ofstream(warn_file) << "ok\t1+1=\t2\texact\nbroken\n";
  const auto warned = run(cat({"bench", "--tasks", warn_file.string(), "--max-tokens", "2"},
                              ws().model_args()));
  CHECK(warned.code == 0);
  CHECK(warned.err.find("warning: line 2") != std::string::npos);
}
