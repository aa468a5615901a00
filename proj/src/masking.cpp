#include "geomae/masking.hpp"

#include <algorithm>

#include "geomae/error.hpp"
#include "geomae/rng.hpp"

namespace geomae {

MaskSpec select_mask(std::span<const uint64_t> nonempty_ids, double ratio, uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("mask ratio must be in [0, 1]");
  for (size_t i = 1; i < nonempty_ids.size(); ++i)
    if (nonempty_ids[i] <= nonempty_ids[i - 1])
      throw GeomaeError("voxel ids must be ascending and unique");

  MaskSpec spec;
  spec.ratio = ratio;
  spec.seed = seed;

  const size_t n = nonempty_ids.size();
  std::vector<uint64_t> shuffled(nonempty_ids.begin(), nonempty_ids.end());
  SplitMix64 rng(seed);
  for (size_t j = n; j-- > 1;) {
    const size_t k = static_cast<size_t>(rng.next() % (j + 1));
    std::swap(shuffled[j], shuffled[k]);
  }

  const size_t m = static_cast<size_t>(round_half_even(ratio * static_cast<double>(n)));
  spec.masked_ids.assign(shuffled.begin(), shuffled.begin() + m);
  spec.visible_ids.assign(shuffled.begin() + m, shuffled.end());
  std::sort(spec.masked_ids.begin(), spec.masked_ids.end());
  std::sort(spec.visible_ids.begin(), spec.visible_ids.end());
  return spec;
}

}  // namespace geomae
