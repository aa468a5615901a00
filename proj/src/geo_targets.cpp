#include "geomae/geo_targets.hpp"

#include <algorithm>
#include <cmath>

#include "geomae/error.hpp"
#include "geomae/parallel.hpp"

namespace geomae {

double SymMat3::frobenius() const {
  return std::sqrt(xx * xx + yy * yy + zz * zz + 2.0 * (xy * xy + xz * xz + yz * yz));
}

PointStatTargets point_stats(const PointCloud& cloud, std::span<const uint32_t> members,
                             const Vec3& voxel_corner, const GridConfig& config,
                             const PyramidSpec& pyramid) {
  if (members.empty()) throw GeomaeError("empty voxel has no targets");

  struct Acc {
    double sum[3] = {0, 0, 0};
    uint32_t count = 0;
  };
  std::array<Acc, kPyramidGrids> acc{};

  for (uint32_t pi : members) {
    Vec3 local = cloud.point(pi) - voxel_corner;
    // subtracting the corner can round a hair below zero for points on the
    // lower face; clamp those, reject genuine misuse
    for (int a = 0; a < 3; ++a) {
      double& c = a == 0 ? local.x : a == 1 ? local.y : local.z;
      if (c < 0.0) {
        if (c < -1e-9 * config.voxel_size[a]) throw GeomaeError("point outside voxel");
        c = 0.0;
      }
    }
    for (int level = 0; level < PyramidSpec::kLevels; ++level) {
      const int slot = pyramid.level_offset(level) + subgrid_index(local, level, config, pyramid);
      acc[slot].sum[0] += local.x;
      acc[slot].sum[1] += local.y;
      acc[slot].sum[2] += local.z;
      acc[slot].count += 1;
    }
  }

  PointStatTargets out;
  for (int level = 0; level < PyramidSpec::kLevels; ++level) {
    const PyramidLevel& lv = pyramid.levels[level];
    const auto cell = pyramid.cell_size(level, config);
    const int base = pyramid.level_offset(level);
    for (int iz = 0; iz < lv.dz; ++iz) {
      for (int iy = 0; iy < lv.dy; ++iy) {
        for (int ix = 0; ix < lv.dx; ++ix) {
          const int slot = base + ix + iy * lv.dx + iz * lv.dx * lv.dy;
          const Acc& a = acc[slot];
          if (a.count == 0) continue;
          out.occupancy[slot] = 1;
          const double center[3] = {(ix + 0.5) * cell[0], (iy + 0.5) * cell[1],
                                    (iz + 0.5) * cell[2]};
          for (int ax = 0; ax < 3; ++ax) {
            const double mean = a.sum[ax] / a.count;
            out.centroid[3 * slot + ax] = static_cast<float>((mean - center[ax]) / cell[ax]);
          }
        }
      }
    }
  }
  return out;
}

SymMat3 covariance(std::span<const Vec3> points) {
  const size_t k = points.size();
  Vec3 mean{};
  for (const Vec3& p : points) mean += p;
  mean = mean * (1.0 / static_cast<double>(k));

  SymMat3 m;
  for (const Vec3& p : points) {
    const Vec3 d = p - mean;
    m.xx += d.x * d.x;
    m.xy += d.x * d.y;
    m.xz += d.x * d.z;
    m.yy += d.y * d.y;
    m.yz += d.y * d.z;
    m.zz += d.z * d.z;
  }
  const double inv = 1.0 / static_cast<double>(k);
  m.xx *= inv;
  m.xy *= inv;
  m.xz *= inv;
  m.yy *= inv;
  m.yz *= inv;
  m.zz *= inv;
  return m;
}

Eig3 eig3_sym(const SymMat3& m) {
  double a[3][3] = {{m.xx, m.xy, m.xz}, {m.xy, m.yy, m.yz}, {m.xz, m.yz, m.zz}};
  double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  const double fro = m.frobenius();
  const double tol = 1e-13 * fro;

  auto offdiag = [&]() {
    return std::sqrt(2.0 * (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]));
  };

  for (int sweep = 0; sweep < 30 && offdiag() > tol; ++sweep) {
    for (int p = 0; p < 3; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double sign = theta >= 0.0 ? 1.0 : -1.0;
        const double t = sign / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        const double apq = a[p][q];
        a[p][p] -= t * apq;
        a[q][q] += t * apq;
        a[p][q] = a[q][p] = 0.0;
        for (int r = 0; r < 3; ++r) {
          if (r != p && r != q) {
            const double arp = a[r][p], arq = a[r][q];
            a[r][p] = a[p][r] = arp - s * (arq + tau * arp);
            a[r][q] = a[q][r] = arq + s * (arp - tau * arq);
          }
          const double vrp = v[r][p], vrq = v[r][q];
          v[r][p] = vrp - s * (vrq + tau * vrp);
          v[r][q] = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }

  int order[3] = {0, 1, 2};
  std::sort(order, order + 3, [&](int i, int j) { return a[i][i] > a[j][j]; });

  Eig3 out;
  for (int k = 0; k < 3; ++k) {
    out.values[k] = a[order[k]][order[k]];
    for (int r = 0; r < 3; ++r) out.vectors[k][r] = v[r][order[k]];
  }
  return out;
}

Vec3 canonicalize_normal(const Vec3& n) {
  constexpr double kTie = 1e-9;
  if (std::abs(n.z) > kTie) return n.z > 0.0 ? n : -n;
  if (std::abs(n.y) > kTie) return n.y > 0.0 ? n : -n;
  if (std::abs(n.x) > kTie) return n.x > 0.0 ? n : -n;
  throw GeomaeError("cannot canonicalize zero normal");
}

SurfaceTargets surface_targets(std::span<const Vec3> gathered) {
  SurfaceTargets out;
  if (gathered.size() < 3) return out;

  const SymMat3 cov = covariance(gathered);
  const Eig3 eig = eig3_sym(cov);
  const double total = eig.values[0] + eig.values[1] + eig.values[2];
  if (total <= 1e-12) return out;

  const Vec3 n = canonicalize_normal(
      Vec3{eig.vectors[2][0], eig.vectors[2][1], eig.vectors[2][2]});
  out.normal = {static_cast<float>(n.x), static_cast<float>(n.y), static_cast<float>(n.z)};
  for (int k = 0; k < 3; ++k)
    out.curvature[k] = static_cast<float>(eig.values[k] / total);
  out.valid = true;
  return out;
}

std::vector<Vec3> gather_neighborhood(const PointCloud& cloud, const VoxelPartition& partition,
                                      uint64_t voxel_id) {
  std::vector<Vec3> gathered;
  for (uint64_t nid : neighborhood_ids(voxel_id, partition.config)) {
    const int64_t g = partition.find_group(nid);
    if (g < 0) continue;
    for (uint32_t pi : partition.group_points(static_cast<size_t>(g)))
      gathered.push_back(cloud.point(pi));
  }
  return gathered;
}

std::vector<TargetRecord> build_target_records(const PointCloud& cloud,
                                               const VoxelPartition& partition,
                                               std::span<const uint64_t> masked_ids,
                                               const PyramidSpec& pyramid, int threads) {
  std::vector<TargetRecord> records(masked_ids.size());

  // validate before the parallel region so errors surface deterministically
  std::vector<int64_t> group_of(masked_ids.size());
  for (size_t i = 0; i < masked_ids.size(); ++i) {
    group_of[i] = partition.find_group(masked_ids[i]);
    if (group_of[i] < 0)
      throw GeomaeError("mask id " + std::to_string(masked_ids[i]) +
                        " is not a non-empty voxel");
  }

  parallel_for(masked_ids.size(), threads, [&](size_t i) {
    const uint64_t id = masked_ids[i];
    TargetRecord& rec = records[i];
    rec.voxel_id = id;
    rec.stats = point_stats(cloud, partition.group_points(static_cast<size_t>(group_of[i])),
                            partition.config.voxel_corner(id), partition.config, pyramid);
    const std::vector<Vec3> gathered = gather_neighborhood(cloud, partition, id);
    rec.surface = surface_targets(gathered);
  });
  return records;
}

}  // namespace geomae
