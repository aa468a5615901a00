#include "geomae/voxelizer.hpp"

#include <algorithm>
#include <cmath>

#include "geomae/error.hpp"

namespace geomae {

void GridConfig::validate() {
  for (int a = 0; a < 3; ++a) {
    if (!(voxel_size[a] > 0.0)) throw ConfigError("voxel_size must be positive");
    const double span = range_max[a] - range_min[a];
    if (!(span > 0.0)) throw ConfigError("range_max must exceed range_min");
    const double ratio = span / voxel_size[a];
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-6)
      throw ConfigError("range is not an integer multiple of voxel_size on axis " +
                        std::to_string(a));
    dims[a] = static_cast<int64_t>(rounded);
    if (dims[a] < 1) throw ConfigError("grid has zero extent on axis " + std::to_string(a));
  }
}

GridConfig preset_nuscenes() {
  GridConfig c;
  c.range_min = {-51.2, -51.2, -5.0};
  c.range_max = {51.2, 51.2, 3.0};
  c.voxel_size = {0.256, 0.256, 8.0};
  c.validate();
  return c;
}

GridConfig preset_waymo() {
  GridConfig c;
  c.range_min = {-74.88, -74.88, -2.0};
  c.range_max = {74.88, 74.88, 4.0};
  c.voxel_size = {0.32, 0.32, 6.0};
  c.validate();
  return c;
}

int64_t VoxelPartition::find_group(uint64_t id) const {
  auto it = std::lower_bound(groups.begin(), groups.end(), id,
                             [](const VoxelGroup& g, uint64_t v) { return g.id < v; });
  if (it == groups.end() || it->id != id) return -1;
  return it - groups.begin();
}

std::vector<uint64_t> VoxelPartition::nonempty_ids() const {
  std::vector<uint64_t> ids;
  ids.reserve(groups.size());
  for (const auto& g : groups) ids.push_back(g.id);
  return ids;
}

VoxelPartition voxelize(const PointCloud& cloud, const GridConfig& config) {
  VoxelPartition part;
  part.config = config;
  part.config.validate();

  const size_t n = cloud.count();
  // (voxel id, point index); sorting these pairs is a stable sort by id.
  std::vector<std::pair<uint64_t, uint32_t>> keyed;
  keyed.reserve(n);

  for (size_t i = 0; i < n; ++i) {
    const Vec3 p = cloud.point(i);
    int64_t idx[3];
    bool in_range = true;
    for (int a = 0; a < 3; ++a) {
      const double t = (p[a] - config.range_min[a]) / config.voxel_size[a];
      const int64_t k = static_cast<int64_t>(std::floor(t));
      if (k < 0 || k >= part.config.dims[a]) {
        in_range = false;
        break;
      }
      idx[a] = k;
    }
    if (in_range) {
      keyed.emplace_back(part.config.linear_id(idx[0], idx[1], idx[2]),
                         static_cast<uint32_t>(i));
    } else {
      part.out_of_range.push_back(static_cast<uint32_t>(i));
    }
  }

  std::sort(keyed.begin(), keyed.end());

  part.order.reserve(keyed.size());
  for (size_t i = 0; i < keyed.size(); ++i) {
    part.order.push_back(keyed[i].second);
    if (i == 0 || keyed[i].first != keyed[i - 1].first) {
      part.groups.push_back({keyed[i].first, static_cast<uint32_t>(i), 1});
    } else {
      ++part.groups.back().count;
    }
  }
  return part;
}

int subgrid_index(const Vec3& local, int level, const GridConfig& config,
                  const PyramidSpec& pyramid) {
  const PyramidLevel& lv = pyramid.levels[level];
  const auto cell = pyramid.cell_size(level, config);
  const int divs[3] = {lv.dx, lv.dy, lv.dz};
  int idx[3];
  for (int a = 0; a < 3; ++a) {
    const double c = local[a];
    if (c < 0.0 || c > config.voxel_size[a]) throw GeomaeError("point outside voxel");
    idx[a] = std::min(static_cast<int>(std::floor(c / cell[a])), divs[a] - 1);
  }
  return idx[0] + idx[1] * lv.dx + idx[2] * lv.dx * lv.dy;
}

std::vector<uint64_t> neighborhood_ids(uint64_t id, const GridConfig& config) {
  const auto idx = config.unpack_id(id);
  std::vector<uint64_t> out;
  out.reserve(9);
  for (int64_t dy = -1; dy <= 1; ++dy) {
    for (int64_t dx = -1; dx <= 1; ++dx) {
      const int64_t ix = idx[0] + dx, iy = idx[1] + dy;
      if (ix < 0 || ix >= config.dims[0] || iy < 0 || iy >= config.dims[1]) continue;
      out.push_back(config.linear_id(ix, iy, idx[2]));
    }
  }
  // dy-major scan already produces ascending ids
  return out;
}

}  // namespace geomae
