#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "geomae/geo_targets.hpp"
#include "geomae/pointcloud.hpp"
#include "geomae/voxelizer.hpp"

namespace geomae {

enum class PointFormat { csv, xyzi_bin };

PointFormat parse_point_format(const std::string& name);  // "csv" | "xyzi_bin"

// CSV rows are "x,y,z" or "x,y,z,i" (consistent across the file). The binary
// format is little-endian f32 records of (x, y, z, intensity), 16 bytes each.
PointCloud read_points(const std::string& path, PointFormat format);
void write_points(const std::string& path, const PointCloud& cloud, PointFormat format);

// Target file ("GMT1"): header with grid echo and record count, then
// fixed-size little-endian records sorted by ascending voxel id.
struct TargetFile {
  GridConfig config;
  std::vector<TargetRecord> records;
};

void write_targets(const std::string& path, std::span<const TargetRecord> records,
                   const GridConfig& config);
TargetFile read_targets(const std::string& path);

// On-disk record size in bytes (fixed).
inline constexpr size_t kTargetRecordBytes =
    8 + kPyramidGrids * 3 * 4 + kPyramidGrids + 3 * 4 + 3 * 4 + 1 + 3;

}  // namespace geomae
