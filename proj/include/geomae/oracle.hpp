#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "geomae/geo_targets.hpp"
#include "geomae/pointcloud.hpp"
#include "geomae/voxelizer.hpp"

namespace geomae::oracle {

// Brute-force re-derivations of every target computation, used only by tests
// and the `verify` command. Nothing here calls into the production target
// code: membership comes from containment comparisons instead of index
// arithmetic, eigenvalues from the closed-form cubic instead of Jacobi, and
// losses from plain scalar loops.

// Descending eigenvalues of a symmetric 3x3 via the trigonometric solution
// of the characteristic polynomial.
std::array<double, 3> eig3_values_cubic(const SymMat3& m);

// Naive single-pass covariance: (1/K) * sum(p p^T) - mean mean^T.
SymMat3 covariance_naive(std::span<const Vec3> points);

// Occupancy and encoded centroids by a per-(point, level, sub-grid) triple
// loop with containment tests. Membership of the voxel itself is decided by
// comparisons against the voxel box, scanning the whole cloud.
PointStatTargets oracle_point_stats(const PointCloud& cloud, uint64_t voxel_id,
                                    const GridConfig& config);

struct OracleSurface {
  std::array<double, 3> eigenvalues{0, 0, 0};  // descending
  Vec3 normal{0, 0, 0};                        // canonical sign
  std::array<double, 3> curvature{0, 0, 0};
  bool valid = false;
  size_t gathered = 0;
};

// Surface descriptors for a voxel's BEV 3x3 neighborhood, gathered by
// scanning the whole cloud against the neighborhood box.
OracleSurface oracle_surface_targets(const PointCloud& cloud, uint64_t voxel_id,
                                     const GridConfig& config);

// Loss terms recomputed with scalar loops over prediction/record pairs.
struct OracleLoss {
  double l_cent = 0, l_occ = 0, l_curv = 0, l_nor = 0;
  double l_point = 0, l_surface = 0, total = 0;
};

OracleLoss oracle_loss(std::span<const double> pred_centroid,  // M * 435
                       std::span<const double> pred_occ_logits,  // M * 145
                       std::span<const double> pred_normal,      // M * 3
                       std::span<const double> pred_curvature,   // M * 3
                       std::span<const TargetRecord> records);

}  // namespace geomae::oracle
