#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "geomae/pointcloud.hpp"

namespace geomae {

// Axis-aligned voxel grid over a fixed scene range. The per-axis extent must
// be an integer multiple of the voxel size (within 1e-6).
struct GridConfig {
  std::array<double, 3> range_min{0, 0, 0};
  std::array<double, 3> range_max{0, 0, 0};
  std::array<double, 3> voxel_size{0, 0, 0};
  std::array<int64_t, 3> dims{0, 0, 0};  // filled by validate()

  void validate();  // throws ConfigError
  int64_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }

  uint64_t linear_id(int64_t ix, int64_t iy, int64_t iz) const {
    return static_cast<uint64_t>(ix + iy * dims[0] + iz * dims[0] * dims[1]);
  }
  std::array<int64_t, 3> unpack_id(uint64_t id) const {
    const int64_t nxy = dims[0] * dims[1];
    const int64_t iz = static_cast<int64_t>(id) / nxy;
    const int64_t rem = static_cast<int64_t>(id) % nxy;
    return {rem % dims[0], rem / dims[0], iz};
  }
  Vec3 voxel_corner(uint64_t id) const {
    const auto idx = unpack_id(id);
    return {range_min[0] + static_cast<double>(idx[0]) * voxel_size[0],
            range_min[1] + static_cast<double>(idx[1]) * voxel_size[1],
            range_min[2] + static_cast<double>(idx[2]) * voxel_size[2]};
  }
};

GridConfig preset_nuscenes();
GridConfig preset_waymo();

struct VoxelGroup {
  uint64_t id;
  uint32_t start;  // offset into VoxelPartition::order
  uint32_t count;
};

// Dynamic voxelization result: every in-range point belongs to exactly one
// group; groups are sorted by ascending linear voxel id and the points inside
// a group keep their input order.
struct VoxelPartition {
  GridConfig config;
  std::vector<uint32_t> order;         // point indices sorted by (voxel id, input index)
  std::vector<VoxelGroup> groups;      // ascending by id
  std::vector<uint32_t> out_of_range;  // excluded point indices, ascending

  std::span<const uint32_t> group_points(size_t g) const {
    return {order.data() + groups[g].start, groups[g].count};
  }
  // Index into groups, or -1 when the voxel is empty.
  int64_t find_group(uint64_t id) const;
  std::vector<uint64_t> nonempty_ids() const;
};

VoxelPartition voxelize(const PointCloud& cloud, const GridConfig& config);

// Three nested partitions of a single voxel. Level l subdivides the voxel
// into divisions[l] cells per axis; sub-grid linear ids run x-fastest.
struct PyramidLevel {
  int dx, dy, dz;
  int cell_count() const { return dx * dy * dz; }
};

struct PyramidSpec {
  std::array<PyramidLevel, 3> levels{{{1, 1, 1}, {2, 2, 4}, {4, 4, 8}}};

  static constexpr int kLevels = 3;
  int level_offset(int level) const {
    int off = 0;
    for (int l = 0; l < level; ++l) off += levels[l].cell_count();
    return off;
  }
  int total_grids() const { return level_offset(kLevels); }  // 1 + 16 + 128 = 145
  std::array<double, 3> cell_size(int level, const GridConfig& config) const {
    return {config.voxel_size[0] / levels[level].dx,
            config.voxel_size[1] / levels[level].dy,
            config.voxel_size[2] / levels[level].dz};
  }
};

inline constexpr int kPyramidGrids = 145;

// Sub-grid linear index of a point given in voxel-local coordinates
// (each component in [0, voxel_size_axis)). Components exactly on the upper
// face clamp into the last cell.
int subgrid_index(const Vec3& local, int level, const GridConfig& config,
                  const PyramidSpec& pyramid);

// The voxel itself plus its up-to-8 neighbors in the x-y plane of the same
// z layer, clipped at grid borders, ascending by id.
std::vector<uint64_t> neighborhood_ids(uint64_t id, const GridConfig& config);

}  // namespace geomae
