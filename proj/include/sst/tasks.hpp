#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sst {

enum class Extractor { exact, last_integer };

std::string_view to_string(Extractor e);
Extractor parse_extractor(std::string_view text);

struct TaskItem {
  std::string id;
  std::string prompt;
  std::string expected;
  Extractor extractor = Extractor::exact;
};

struct TaskFile {
  std::vector<TaskItem> items;
  std::vector<std::string> warnings;  // one per skipped line
};

// One record per line: id <TAB> prompt <TAB> expected <TAB> extractor.
// Blank lines and lines starting with '#' are ignored. In the prompt and
// expected fields \n, \t and \\ are unescaped. Malformed lines and repeated
// ids are skipped with a warning.
TaskFile parse_task_text(std::string_view text);
TaskFile load_task_file(const std::filesystem::path& path);

// exact: the output with surrounding whitespace trimmed.
// last_integer: the last run of digits (optional leading '-', thousands
// commas dropped), or "" when there is none.
std::string extract_answer(std::string_view output, Extractor extractor);

}  // namespace sst
