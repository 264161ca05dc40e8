#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sst/trace.hpp"

namespace sst {

// Pearson correlation between sampled state dimensions. values is row-major
// |dims| x |dims|, symmetric, unit diagonal, entries in [-1, 1]. A dimension
// with zero variance over the window correlates 0 with every other one.
struct FCMatrix {
  std::vector<std::size_t> dims;
  std::vector<double> values;

  std::size_t size() const noexcept { return dims.size(); }
  double at(std::size_t i, std::size_t j) const { return values[i * dims.size() + j]; }
  bool operator==(const FCMatrix&) const = default;
};

// Each event is one sample; every event must carry |dims| values. Throws
// std::invalid_argument with fewer than two samples.
FCMatrix fc_matrix(std::span<const TraceEvent> window, std::vector<std::size_t> dims);

// Samples for the panel at (step, pass): the pass-`pass` states of `layer`
// at the last `window` sequence positions recorded up to and including
// `step`. A prefill step contributes every prompt position it recorded.
std::vector<TraceEvent> fc_window(const TraceSink& sink, std::size_t step, std::size_t pass,
                                  std::size_t layer, std::size_t window);

// "# dims d0 d1 ..." followed by one whitespace-separated row per line.
std::string format_fc(const FCMatrix& m);
FCMatrix parse_fc(std::string_view text);
void export_fc(const FCMatrix& m, const std::filesystem::path& path);

}  // namespace sst
