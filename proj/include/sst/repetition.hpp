#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "sst/tokenizer.hpp"

namespace sst {

enum class RepetitionKind { none, direct, cyclic, attractor };

std::string_view to_string(RepetitionKind kind);

struct RepetitionReport {
  RepetitionKind kind = RepetitionKind::none;
  std::size_t period = 0;       // tokens per repeat
  std::size_t run_length = 0;   // whole repeats observed
  std::size_t onset_index = 0;  // index in the window where the run starts
};

struct RepetitionThresholds {
  std::size_t window = 64;      // only the trailing `window` tokens are inspected
  std::size_t max_period = 8;
  std::size_t min_direct_run = 3;
  std::size_t min_cycle_repeats = 3;
  std::size_t attractor_direct_run = 30;
  std::size_t attractor_cycle_repeats = 6;
};

// Classifies the periodic run that ends the window, using the smallest
// period that explains it. period == 1 is a direct repeat; longer periods
// are cycles; either becomes an attractor past its threshold. Windows
// shorter than 2 tokens report none.
RepetitionReport detect_repetition(std::span<const TokenId> window,
                                   const RepetitionThresholds& thresholds = {});

}  // namespace sst
