#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sst {

struct TraceKey {
  std::size_t step = 0;
  std::size_t pass = 0;
  std::size_t layer = 0;
  std::size_t position = 0;

  auto operator<=>(const TraceKey&) const = default;
};

// One recorded state row, reduced to the sink's dimension subset. Values
// are raw (never normalized).
struct TraceEvent {
  TraceKey key;
  std::vector<float> values;

  bool operator==(const TraceEvent&) const = default;
};

// First 16 dimensions plus 16 evenly spaced over the rest, sorted.
std::vector<std::size_t> default_trace_dims(std::size_t d_model);

// Which rows the generation loop hands to the sink. Empty `layers` means
// the final layer only.
struct TraceSelection {
  std::vector<std::size_t> layers;
  bool all_positions = false;
};

// In-memory append-only trace. Keys must arrive in strictly increasing
// (step, pass, layer, position) order.
class TraceSink {
 public:
  TraceSink() = default;
  TraceSink(std::vector<std::size_t> dims, std::string config_hash = {},
            TraceSelection selection = {});

  // Appends an event holding state_row[dims]. Throws std::logic_error on an
  // out-of-order key and std::out_of_range on a dimension past the row.
  void record(const TraceKey& key, std::span<const float> state_row);

  const std::vector<TraceEvent>& events() const noexcept { return events_; }
  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  const std::string& config_hash() const noexcept { return config_hash_; }
  const TraceSelection& selection() const noexcept { return selection_; }
  std::size_t size() const noexcept { return events_.size(); }

  // Appends an already-reduced event (used by import).
  void append(TraceEvent event);

 private:
  std::vector<std::size_t> dims_;
  std::string config_hash_;
  TraceSelection selection_;
  std::vector<TraceEvent> events_;
};

void record_state(TraceSink& sink, std::size_t step, std::size_t pass, std::size_t layer,
                  std::size_t position, std::span<const float> state_row);

// Line format:
//   #sst-trace config=<hash> dims=<d0>,<d1>,...
//   <step> <pass> <layer> <position> <v0> <v1> ...
// Floats use the shortest text that round-trips.
std::string format_trace(const TraceSink& sink);
TraceSink parse_trace(std::string_view text);
void export_trace(const TraceSink& sink, const std::filesystem::path& path);
TraceSink import_trace(const std::filesystem::path& path);

struct TraceDiff {
  std::map<TraceKey, float> per_key;  // max |a - b| per shared key
  float overall_max = 0.0f;
  std::vector<TraceKey> only_in_a;
  std::vector<TraceKey> only_in_b;
  bool dims_match = true;

  bool keys_match() const { return only_in_a.empty() && only_in_b.empty() && dims_match; }
  bool identical() const { return keys_match() && overall_max == 0.0f; }
};

// Key mismatches are listed in the report rather than thrown.
TraceDiff compare_traces(const TraceSink& a, const TraceSink& b);

// Only the last recorded position of each (step, pass, layer).
TraceSink final_positions(const TraceSink& sink);

// Events recorded at `pass`, re-keyed to pass 0 so slices from different
// passes compare key-for-key.
TraceSink slice_pass(const TraceSink& sink, std::size_t pass);

}  // namespace sst
