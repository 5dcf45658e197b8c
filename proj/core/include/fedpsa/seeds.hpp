#pragma once

#include <cstdint>

namespace fedpsa {

/// Independent random streams derived from one master seed.
enum class SeedStream : std::uint64_t {
  Init = 1,
  Partition = 2,
  Latency = 3,
  Projection = 4,
  Shuffle = 5,
  Calibration = 6,
  Admission = 7,
  TestSplit = 8,
  Probe = 9,
  Data = 10,
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based sub-seed: mix64(mix64(master) ^ mix64(stream) + counter).
/// Each (stream, counter) pair is an independent, individually reproducible seed.
constexpr std::uint64_t derive_seed(std::uint64_t master, SeedStream stream,
                                    std::uint64_t counter = 0) noexcept {
  return mix64((mix64(master) ^ mix64(static_cast<std::uint64_t>(stream) << 32)) + counter);
}

}  // namespace fedpsa
