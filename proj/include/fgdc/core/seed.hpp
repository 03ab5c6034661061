#pragma once

#include <cstdint>

namespace fgdc {

// SplitMix64 finalizer; decorrelates nearby integer seeds.
constexpr std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix(a ^ splitmix(b + 0x632BE59BD9B4E019ULL));
}

}  // namespace fgdc
