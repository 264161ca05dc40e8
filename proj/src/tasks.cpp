#include "sst/tasks.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sst {

std::string_view to_string(Extractor e) {
  return e == Extractor::exact ? "exact" : "last-integer";
}

Extractor parse_extractor(std::string_view text) {
  if (text == "exact") return Extractor::exact;
  if (text == "last-integer") return Extractor::last_integer;
  throw std::invalid_argument("unknown extractor '" + std::string(text) + "'");
}

namespace {

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char next = s[++i];
      if (next == 'n') out += '\n';
      else if (next == 't') out += '\t';
      else if (next == '\\') out += '\\';
      else {
        out += '\\';
        out += next;
      }
    } else {
      out += s[i];
    }
  }
  return out;
}

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

}  // namespace

TaskFile parse_task_text(std::string_view text) {
  TaskFile file;
  std::set<std::string> ids;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
      fields.push_back(line.substr(start, tab - start));
    }
    fields.push_back(line.substr(start));

    auto skip = [&](const std::string& why) {
      file.warnings.push_back("line " + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != 4) {
      skip("expected 4 tab-separated fields, found " + std::to_string(fields.size()));
      continue;
    }
    if (fields[0].empty()) {
      skip("empty id");
      continue;
    }
    TaskItem item;
    try {
      item.extractor = parse_extractor(fields[3]);
    } catch (const std::invalid_argument& e) {
      skip(e.what());
      continue;
    }
    if (!ids.insert(fields[0]).second) {
      skip("duplicate id '" + fields[0] + "'");
      continue;
    }
    item.id = fields[0];
    item.prompt = unescape(fields[1]);
    item.expected = unescape(fields[2]);
    file.items.push_back(std::move(item));
  }
  return file;
}

TaskFile load_task_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open task file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_task_text(buf.str());
}

std::string extract_answer(std::string_view output, Extractor extractor) {
  if (extractor == Extractor::exact) {
    const auto first = output.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return "";
    const auto last = output.find_last_not_of(" \t\r\n");
    return std::string(output.substr(first, last - first + 1));
  }

  // Scan backwards for the last digit, then extend left over digits and
  // commas that sit between digits.
  std::size_t end = output.size();
  while (end > 0 && !is_digit(output[end - 1])) --end;
  if (end == 0) return "";
  std::size_t begin = end;
  while (begin > 0) {
    const char c = output[begin - 1];
    if (is_digit(c)) {
      --begin;
    } else if (c == ',' && begin >= 2 && is_digit(output[begin - 2])) {
      --begin;
    } else {
      break;
    }
  }
  std::string number;
  if (begin > 0 && output[begin - 1] == '-') number += '-';
  for (std::size_t i = begin; i < end; ++i) {
    if (output[i] != ',') number += output[i];
  }
  return number;
}

}  // namespace sst
