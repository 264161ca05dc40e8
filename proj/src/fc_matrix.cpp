#include "sst/fc_matrix.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sst {

FCMatrix fc_matrix(std::span<const TraceEvent> window, std::vector<std::size_t> dims) {
  if (window.size() < 2) {
    throw std::invalid_argument("fc_matrix: window too small (" +
                                std::to_string(window.size()) + " samples, need 2)");
  }
  const std::size_t n = dims.size();
  for (const auto& e : window) {
    if (e.values.size() != n) {
      throw std::invalid_argument("fc_matrix: sample width does not match dims");
    }
  }
  const double count = static_cast<double>(window.size());

  std::vector<double> mean(n, 0.0);
  for (const auto& e : window) {
    for (std::size_t i = 0; i < n; ++i) mean[i] += e.values[i];
  }
  for (auto& m : mean) m /= count;

  std::vector<double> cov(n * n, 0.0);
  for (const auto& e : window) {
    for (std::size_t i = 0; i < n; ++i) {
      const double di = e.values[i] - mean[i];
      for (std::size_t j = i; j < n; ++j) cov[i * n + j] += di * (e.values[j] - mean[j]);
    }
  }

  FCMatrix out{std::move(dims), std::vector<double>(n * n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double vi = cov[i * n + i], vj = cov[j * n + j];
      double r = 0.0;
      if (vi > 0.0 && vj > 0.0) r = std::clamp(cov[i * n + j] / std::sqrt(vi * vj), -1.0, 1.0);
      out.values[i * n + j] = r;
      out.values[j * n + i] = r;
    }
  }
  return out;
}

std::vector<TraceEvent> fc_window(const TraceSink& sink, std::size_t step, std::size_t pass,
                                  std::size_t layer, std::size_t window) {
  // Sink order is (step, pass, layer, position), so the filtered events are
  // already in sequence order.
  std::vector<const TraceEvent*> matching;
  for (const auto& e : sink.events()) {
    if (e.key.pass == pass && e.key.layer == layer && e.key.step <= step) {
      matching.push_back(&e);
    }
  }
  const std::size_t first = matching.size() > window ? matching.size() - window : 0;
  std::vector<TraceEvent> out;
  out.reserve(matching.size() - first);
  for (std::size_t i = first; i < matching.size(); ++i) out.push_back(*matching[i]);
  return out;
}

std::string format_fc(const FCMatrix& m) {
  std::string out = "# dims";
  for (auto d : m.dims) out += ' ' + std::to_string(d);
  out += '\n';
  char buf[32];
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (j) out += ' ';
      auto r = std::to_chars(buf, buf + sizeof(buf), m.at(i, j));
      out.append(buf, r.ptr);
    }
    out += '\n';
  }
  return out;
}

FCMatrix parse_fc(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("# dims")) {
    throw std::runtime_error("fc: missing '# dims' header");
  }
  FCMatrix m;
  {
    std::istringstream header(line.substr(6));
    std::size_t d;
    while (header >> d) m.dims.push_back(d);
  }
  std::string token;
  while (in >> token) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || p != token.data() + token.size()) {
      throw std::runtime_error("fc: bad value '" + token + "'");
    }
    m.values.push_back(v);
  }
  if (m.values.size() != m.dims.size() * m.dims.size()) {
    throw std::runtime_error("fc: matrix is not square over its dims");
  }
  return m;
}

void export_fc(const FCMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write FC file: " + path.string());
  const std::string text = format_fc(m);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace sst
