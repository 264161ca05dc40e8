#include "sst/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sst {

namespace {

void append_float(std::string& out, float v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, r.ptr);
}

template <typename T>
T parse_number(std::string_view token, std::string_view what) {
  T value{};
  auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || p != token.data() + token.size()) {
    throw std::runtime_error("trace: bad " + std::string(what) + " '" + std::string(token) +
                             "'");
  }
  return value;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= line.size()) {
    const auto next = line.find(sep, start);
    const auto end = next == std::string_view::npos ? line.size() : next;
    if (end > start) out.push_back(line.substr(start, end - start));
    if (next == std::string_view::npos) break;
    start = next + 1;
  }
  return out;
}

}  // namespace

std::vector<std::size_t> default_trace_dims(std::size_t d_model) {
  std::vector<std::size_t> dims;
  const std::size_t head = std::min<std::size_t>(16, d_model);
  for (std::size_t i = 0; i < head; ++i) dims.push_back(i);
  if (d_model > head) {
    const std::size_t rest = d_model - head;
    const std::size_t count = std::min<std::size_t>(16, rest);
    for (std::size_t i = 0; i < count; ++i) dims.push_back(head + i * rest / count);
  }
  std::sort(dims.begin(), dims.end());
  dims.erase(std::unique(dims.begin(), dims.end()), dims.end());
  return dims;
}

TraceSink::TraceSink(std::vector<std::size_t> dims, std::string config_hash,
                     TraceSelection selection)
    : dims_(std::move(dims)),
      config_hash_(std::move(config_hash)),
      selection_(std::move(selection)) {}

void TraceSink::append(TraceEvent event) {
  if (!events_.empty() && !(events_.back().key < event.key)) {
    throw std::logic_error("trace: keys must be strictly increasing");
  }
  if (event.values.size() != dims_.size()) {
    throw std::invalid_argument("trace: event carries " + std::to_string(event.values.size()) +
                                " values, sink has " + std::to_string(dims_.size()) + " dims");
  }
  events_.push_back(std::move(event));
}

void TraceSink::record(const TraceKey& key, std::span<const float> state_row) {
  TraceEvent event{key, {}};
  event.values.reserve(dims_.size());
  for (auto d : dims_) {
    if (d >= state_row.size()) {
      throw std::out_of_range("trace: dimension " + std::to_string(d) +
                              " outside state of width " + std::to_string(state_row.size()));
    }
    event.values.push_back(state_row[d]);
  }
  append(std::move(event));
}

void record_state(TraceSink& sink, std::size_t step, std::size_t pass, std::size_t layer,
                  std::size_t position, std::span<const float> state_row) {
  sink.record(TraceKey{step, pass, layer, position}, state_row);
}

std::string format_trace(const TraceSink& sink) {
  std::string out = "#sst-trace config=";
  out += sink.config_hash().empty() ? "-" : sink.config_hash();
  out += " dims=";
  for (std::size_t i = 0; i < sink.dims().size(); ++i) {
    if (i) out += ',';
    out += std::to_string(sink.dims()[i]);
  }
  out += '\n';
  for (const auto& e : sink.events()) {
    out += std::to_string(e.key.step) + ' ' + std::to_string(e.key.pass) + ' ' +
           std::to_string(e.key.layer) + ' ' + std::to_string(e.key.position);
    for (float v : e.values) {
      out += ' ';
      append_float(out, v);
    }
    out += '\n';
  }
  return out;
}

TraceSink parse_trace(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("#sst-trace ")) {
    throw std::runtime_error("trace: missing '#sst-trace' header");
  }
  std::string config_hash;
  std::vector<std::size_t> dims;
  for (auto field : split(std::string_view(line).substr(11), ' ')) {
    if (field.starts_with("config=")) {
      config_hash = std::string(field.substr(7));
      if (config_hash == "-") config_hash.clear();
    } else if (field.starts_with("dims=")) {
      for (auto d : split(field.substr(5), ',')) dims.push_back(parse_number<std::size_t>(d, "dim"));
    }
  }
  TraceSink sink(std::move(dims), std::move(config_hash));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, ' ');
    if (fields.size() < 4) throw std::runtime_error("trace: short record '" + line + "'");
    TraceEvent e;
    e.key.step = parse_number<std::size_t>(fields[0], "step");
    e.key.pass = parse_number<std::size_t>(fields[1], "pass");
    e.key.layer = parse_number<std::size_t>(fields[2], "layer");
    e.key.position = parse_number<std::size_t>(fields[3], "position");
    for (std::size_t i = 4; i < fields.size(); ++i) {
      e.values.push_back(parse_number<float>(fields[i], "value"));
    }
    sink.append(std::move(e));
  }
  return sink;
}

void export_trace(const TraceSink& sink, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trace file: " + path.string());
  const std::string text = format_trace(sink);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("trace write failed: " + path.string());
}

TraceSink import_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_trace(buf.str());
}

TraceDiff compare_traces(const TraceSink& a, const TraceSink& b) {
  TraceDiff diff;
  diff.dims_match = a.dims() == b.dims();
  std::map<TraceKey, const TraceEvent*> in_b;
  for (const auto& e : b.events()) in_b.emplace(e.key, &e);
  for (const auto& e : a.events()) {
    auto it = in_b.find(e.key);
    if (it == in_b.end()) {
      diff.only_in_a.push_back(e.key);
      continue;
    }
    float worst = 0.0f;
    const auto& other = it->second->values;
    if (other.size() != e.values.size()) {
      worst = INFINITY;
    } else {
      for (std::size_t i = 0; i < other.size(); ++i) {
        worst = std::max(worst, std::fabs(e.values[i] - other[i]));
      }
    }
    diff.per_key.emplace(e.key, worst);
    diff.overall_max = std::max(diff.overall_max, worst);
    in_b.erase(it);
  }
  for (const auto& [key, event] : in_b) diff.only_in_b.push_back(key);
  return diff;
}

TraceSink final_positions(const TraceSink& sink) {
  TraceSelection selection = sink.selection();
  selection.all_positions = false;
  TraceSink out(sink.dims(), sink.config_hash(), selection);
  const auto& events = sink.events();
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& k = events[i].key;
    const bool last = i + 1 == events.size() || events[i + 1].key.step != k.step ||
                      events[i + 1].key.pass != k.pass || events[i + 1].key.layer != k.layer;
    if (last) out.append(events[i]);
  }
  return out;
}

TraceSink slice_pass(const TraceSink& sink, std::size_t pass) {
  TraceSink out(sink.dims(), sink.config_hash(), sink.selection());
  for (const auto& e : sink.events()) {
    if (e.key.pass != pass) continue;
    TraceEvent copy = e;
    copy.key.pass = 0;
    out.append(std::move(copy));
  }
  return out;
}

}  // namespace sst
