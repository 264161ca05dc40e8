#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace sst {

// Incremental 64-bit FNV-1a. Stable across platforms and runs, unlike
// std::hash, so it is usable for golden snapshots and config fingerprints.
class Fnv1a {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  void update(std::span<const std::byte> bytes) noexcept {
    for (auto b : bytes) {
      state_ ^= static_cast<std::uint8_t>(b);
      state_ *= kPrime;
    }
  }
  void update(std::string_view text) noexcept {
    update(std::as_bytes(std::span(text.data(), text.size())));
  }
  template <typename T>
  void update_pod(const T& value) noexcept {
    update(std::as_bytes(std::span(&value, 1)));
  }

  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = kOffset;
};

std::string hex64(std::uint64_t value);

}  // namespace sst
