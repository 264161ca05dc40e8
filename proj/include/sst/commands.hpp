#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

// Command-line surface. Every subcommand is reachable in-process through
// run(), which is what the tool's main() and the integration tests call.
namespace sst::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitRuntime = 2,
  kExitAttractor = 3,
};

// args excludes the program name, e.g. {"membudget", "--tokens", "2048"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// 1024-based units: "0 B", "256 KB", "512 MB", "1.50 GB".
std::string format_bytes(std::uint64_t bytes);

std::string membudget_report(std::uint64_t tokens, std::uint64_t d_model, std::uint64_t layers,
                             std::uint64_t bytes_per_value);

}  // namespace sst::cli
