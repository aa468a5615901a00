#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace geomae {

// Deterministic split of the non-empty voxels into masked and visible sets.
struct MaskSpec {
  double ratio = 0.0;
  uint64_t seed = 0;
  std::vector<uint64_t> masked_ids;   // ascending
  std::vector<uint64_t> visible_ids;  // ascending complement
};

// Fisher-Yates shuffle driven by a SplitMix64 stream seeded with `seed`;
// the first round(ratio * n) shuffled entries are masked (round half to
// even). Both output lists are re-sorted ascending.
MaskSpec select_mask(std::span<const uint64_t> nonempty_ids, double ratio, uint64_t seed);

}  // namespace geomae
