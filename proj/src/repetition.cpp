#include "sst/repetition.hpp"

#include <algorithm>
#include <vector>

namespace sst {

std::string_view to_string(RepetitionKind kind) {
  switch (kind) {
    case RepetitionKind::none: return "none";
    case RepetitionKind::direct: return "direct";
    case RepetitionKind::cyclic: return "cyclic";
    case RepetitionKind::attractor: return "attractor";
  }
  return "unknown";
}

namespace {

int severity(RepetitionKind kind) {
  switch (kind) {
    case RepetitionKind::attractor: return 2;
    case RepetitionKind::direct:
    case RepetitionKind::cyclic: return 1;
    case RepetitionKind::none: break;
  }
  return 0;
}

}  // namespace

RepetitionReport detect_repetition(std::span<const TokenId> window,
                                   const RepetitionThresholds& thresholds) {
  const std::size_t offset =
      window.size() > thresholds.window ? window.size() - thresholds.window : 0;
  const auto w = window.subspan(offset);
  const std::size_t n = w.size();
  RepetitionReport best;
  if (n < 2) return best;

  // coverage[p] = length of the longest suffix that is periodic with period p.
  const std::size_t max_p = std::min(thresholds.max_period, n / 2);
  std::vector<std::size_t> coverage(max_p + 1, 0);
  for (std::size_t p = 1; p <= max_p; ++p) {
    std::size_t matched = 0;
    while (matched + p < n && w[n - 1 - matched] == w[n - 1 - matched - p]) ++matched;
    coverage[p] = matched + p;
  }

  for (std::size_t p = 1; p <= max_p; ++p) {
    // A period whose run is fully explained by one of its divisors is not
    // minimal: "aaaa" is period 1, never period 2.
    bool reducible = false;
    for (std::size_t q = 1; q < p && !reducible; ++q) {
      reducible = p % q == 0 && coverage[q] >= coverage[p];
    }
    if (reducible) continue;

    const std::size_t repeats = coverage[p] / p;
    if (repeats < 2) continue;
    RepetitionReport r;
    r.period = p;
    r.run_length = repeats;
    r.onset_index = offset + n - repeats * p;
    if (p == 1) {
      if (repeats >= thresholds.attractor_direct_run) r.kind = RepetitionKind::attractor;
      else if (repeats >= thresholds.min_direct_run) r.kind = RepetitionKind::direct;
    } else {
      if (repeats >= thresholds.attractor_cycle_repeats) r.kind = RepetitionKind::attractor;
      else if (repeats >= thresholds.min_cycle_repeats) r.kind = RepetitionKind::cyclic;
    }
    if (severity(r.kind) > severity(best.kind)) best = r;
  }
  return best;
}

}  // namespace sst
