#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "geomae/pointcloud.hpp"
#include "geomae/voxelizer.hpp"

namespace geomae {

// Per-voxel pyramid statistics. Slot layout over the 145 sub-grids:
// top (1), then middle (16), then bottom (128); within a level by x-fastest
// linear index. Centroids are stored as the offset of the point mean from the
// sub-grid center, divided by the sub-grid size per axis, so occupied slots
// always fall in [-0.5, 0.5). Unoccupied slots hold 0.
struct PointStatTargets {
  std::array<float, kPyramidGrids * 3> centroid{};
  std::array<uint8_t, kPyramidGrids> occupancy{};
};

// PCA surface descriptors of a gathered neighborhood. Invalid when fewer than
// 3 points were gathered or the covariance trace vanishes.
struct SurfaceTargets {
  std::array<float, 3> normal{0, 0, 0};
  std::array<float, 3> curvature{0, 0, 0};
  bool valid = false;
};

// Unique entries of a symmetric 3x3 matrix.
struct SymMat3 {
  double xx = 0, xy = 0, xz = 0, yy = 0, yz = 0, zz = 0;

  double frobenius() const;
  std::array<double, 9> full() const {
    return {xx, xy, xz, xy, yy, yz, xz, yz, zz};
  }
};

struct Eig3 {
  std::array<double, 3> values;           // descending
  std::array<std::array<double, 3>, 3> vectors;  // vectors[k] pairs with values[k]
};

// Everything a masked voxel needs for pre-training supervision.
struct TargetRecord {
  uint64_t voxel_id = 0;
  PointStatTargets stats;
  SurfaceTargets surface;
};

// Pyramid occupancy and encoded centroids from the voxel's own points.
// `members` are point indices into `cloud`, in partition group order.
PointStatTargets point_stats(const PointCloud& cloud, std::span<const uint32_t> members,
                             const Vec3& voxel_corner, const GridConfig& config,
                             const PyramidSpec& pyramid);

// Mean-subtracted two-pass covariance, accumulated in f64.
SymMat3 covariance(std::span<const Vec3> points);

// Cyclic Jacobi eigendecomposition. Eigenvalues descending; vectors
// orthonormal with residual |M v - lambda v| <= 1e-10 * max(1, |M|_F).
Eig3 eig3_sym(const SymMat3& m);

// Deterministic sign convention: flip so n_z > 0; on the n_z ~ 0 boundary
// require n_y > 0, then n_x > 0. Throws on a zero vector.
Vec3 canonicalize_normal(const Vec3& n);

// Normal and pseudo-curvature of a gathered point set.
SurfaceTargets surface_targets(std::span<const Vec3> gathered);

// One record per masked voxel, ascending by voxel id. Point statistics use
// the voxel's own points; surface properties gather the BEV 3x3 neighborhood
// from the original cloud (masked neighbors included). Parallel over voxels;
// results are identical for any thread count.
std::vector<TargetRecord> build_target_records(const PointCloud& cloud,
                                               const VoxelPartition& partition,
                                               std::span<const uint64_t> masked_ids,
                                               const PyramidSpec& pyramid, int threads = 1);

// Gathered neighborhood of one voxel (production gather order: ascending
// neighbor voxel id, group order within a voxel). Exposed for verification.
std::vector<Vec3> gather_neighborhood(const PointCloud& cloud, const VoxelPartition& partition,
                                      uint64_t voxel_id);

}  // namespace geomae
