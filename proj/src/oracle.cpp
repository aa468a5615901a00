#include "geomae/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "geomae/error.hpp"

namespace geomae::oracle {

namespace {

// Independent id -> (ix, iy, iz) arithmetic.
struct Cell {
  int64_t ix, iy, iz;
};

Cell cell_of(uint64_t id, const GridConfig& config) {
  const int64_t nx = config.dims[0], ny = config.dims[1];
  const int64_t v = static_cast<int64_t>(id);
  return {v % nx, (v / nx) % ny, v / (nx * ny)};
}

Vec3 corner_of(const Cell& c, const GridConfig& config) {
  return {config.range_min[0] + static_cast<double>(c.ix) * config.voxel_size[0],
          config.range_min[1] + static_cast<double>(c.iy) * config.voxel_size[1],
          config.range_min[2] + static_cast<double>(c.iz) * config.voxel_size[2]};
}

bool in_box(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  return p.x >= lo.x && p.x < hi.x && p.y >= lo.y && p.y < hi.y && p.z >= lo.z && p.z < hi.z;
}

Vec3 sign_rule(Vec3 n) {
  constexpr double kTie = 1e-9;
  double lead = n.z;
  if (std::abs(n.z) <= kTie) lead = std::abs(n.y) > kTie ? n.y : n.x;
  if (lead < 0.0) n = -n;
  return n;
}

}  // namespace

std::array<double, 3> eig3_values_cubic(const SymMat3& m) {
  const double p1 = m.xy * m.xy + m.xz * m.xz + m.yz * m.yz;
  if (p1 == 0.0) {
    std::array<double, 3> v{m.xx, m.yy, m.zz};
    std::sort(v.begin(), v.end(), std::greater<>());
    return v;
  }
  const double q = (m.xx + m.yy + m.zz) / 3.0;
  const double p2 =
      (m.xx - q) * (m.xx - q) + (m.yy - q) * (m.yy - q) + (m.zz - q) * (m.zz - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  // B = (M - qI) / p
  const double bxx = (m.xx - q) / p, byy = (m.yy - q) / p, bzz = (m.zz - q) / p;
  const double bxy = m.xy / p, bxz = m.xz / p, byz = m.yz / p;
  const double detb = bxx * (byy * bzz - byz * byz) - bxy * (bxy * bzz - byz * bxz) +
                      bxz * (bxy * byz - byy * bxz);
  const double r = std::clamp(detb / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double l1 = q + 2.0 * p * std::cos(phi);
  const double l3 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
  const double l2 = 3.0 * q - l1 - l3;
  return {l1, l2, l3};
}

SymMat3 covariance_naive(std::span<const Vec3> points) {
  const double k = static_cast<double>(points.size());
  double sxx = 0, sxy = 0, sxz = 0, syy = 0, syz = 0, szz = 0;
  double mx = 0, my = 0, mz = 0;
  for (const Vec3& p : points) {
    sxx += p.x * p.x;
    sxy += p.x * p.y;
    sxz += p.x * p.z;
    syy += p.y * p.y;
    syz += p.y * p.z;
    szz += p.z * p.z;
    mx += p.x;
    my += p.y;
    mz += p.z;
  }
  mx /= k;
  my /= k;
  mz /= k;
  SymMat3 m;
  m.xx = sxx / k - mx * mx;
  m.xy = sxy / k - mx * my;
  m.xz = sxz / k - mx * mz;
  m.yy = syy / k - my * my;
  m.yz = syz / k - my * mz;
  m.zz = szz / k - mz * mz;
  return m;
}

PointStatTargets oracle_point_stats(const PointCloud& cloud, uint64_t voxel_id,
                                    const GridConfig& config) {
  const Cell cell = cell_of(voxel_id, config);
  const Vec3 corner = corner_of(cell, config);
  const Vec3 upper = {corner.x + config.voxel_size[0], corner.y + config.voxel_size[1],
                      corner.z + config.voxel_size[2]};

  std::vector<Vec3> locals;  // in cloud order
  for (size_t i = 0; i < cloud.count(); ++i) {
    const Vec3 p = cloud.point(i);
    if (in_box(p, corner, upper)) locals.push_back(p - corner);
  }
  if (locals.empty()) throw GeomaeError("empty voxel has no targets");

  static constexpr int kDivs[3][3] = {{1, 1, 1}, {2, 2, 4}, {4, 4, 8}};
  PointStatTargets out;
  int slot = 0;
  for (int level = 0; level < 3; ++level) {
    const int dx = kDivs[level][0], dy = kDivs[level][1], dz = kDivs[level][2];
    const double cw[3] = {config.voxel_size[0] / dx, config.voxel_size[1] / dy,
                          config.voxel_size[2] / dz};
    for (int iz = 0; iz < dz; ++iz) {
      for (int iy = 0; iy < dy; ++iy) {
        for (int ix = 0; ix < dx; ++ix, ++slot) {
          const double lo[3] = {ix * cw[0], iy * cw[1], iz * cw[2]};
          const double hi[3] = {(ix + 1) * cw[0], (iy + 1) * cw[1], (iz + 1) * cw[2]};
          const bool last[3] = {ix == dx - 1, iy == dy - 1, iz == dz - 1};
          double sum[3] = {0, 0, 0};
          uint32_t count = 0;
          for (const Vec3& l : locals) {
            bool inside = true;
            for (int a = 0; a < 3; ++a) {
              const double c = a == 0 ? l.x : a == 1 ? l.y : l.z;
              // half-open cells; the voxel's inner upper face belongs to the
              // last cell
              if (c < lo[a] || (c >= hi[a] && !(last[a] && c <= config.voxel_size[a]))) {
                inside = false;
                break;
              }
            }
            if (!inside) continue;
            sum[0] += l.x;
            sum[1] += l.y;
            sum[2] += l.z;
            ++count;
          }
          if (count == 0) continue;
          out.occupancy[slot] = 1;
          const double center[3] = {(ix + 0.5) * cw[0], (iy + 0.5) * cw[1], (iz + 0.5) * cw[2]};
          for (int a = 0; a < 3; ++a) {
            const double mean = sum[a] / count;
            out.centroid[3 * slot + a] = static_cast<float>((mean - center[a]) / cw[a]);
          }
        }
      }
    }
  }
  return out;
}

OracleSurface oracle_surface_targets(const PointCloud& cloud, uint64_t voxel_id,
                                     const GridConfig& config) {
  const Cell cell = cell_of(voxel_id, config);
  // BEV 3x3 box, clipped at grid borders, same z layer
  const int64_t x0 = std::max<int64_t>(cell.ix - 1, 0);
  const int64_t x1 = std::min<int64_t>(cell.ix + 2, config.dims[0]);
  const int64_t y0 = std::max<int64_t>(cell.iy - 1, 0);
  const int64_t y1 = std::min<int64_t>(cell.iy + 2, config.dims[1]);
  const Vec3 lo = {config.range_min[0] + x0 * config.voxel_size[0],
                   config.range_min[1] + y0 * config.voxel_size[1],
                   config.range_min[2] + cell.iz * config.voxel_size[2]};
  const Vec3 hi = {config.range_min[0] + x1 * config.voxel_size[0],
                   config.range_min[1] + y1 * config.voxel_size[1],
                   config.range_min[2] + (cell.iz + 1) * config.voxel_size[2]};

  std::vector<Vec3> gathered;
  for (size_t i = 0; i < cloud.count(); ++i) {
    const Vec3 p = cloud.point(i);
    if (in_box(p, lo, hi)) gathered.push_back(p);
  }

  OracleSurface out;
  out.gathered = gathered.size();
  if (gathered.size() < 3) return out;

  const SymMat3 m = covariance_naive(gathered);
  const auto lambda = eig3_values_cubic(m);
  const double total = lambda[0] + lambda[1] + lambda[2];
  if (total <= 1e-12) return out;

  // eigenvector of the least eigenvalue from the row cross products of
  // (M - lambda_3 I)
  const double d = lambda[2];
  const Vec3 r0{m.xx - d, m.xy, m.xz};
  const Vec3 r1{m.xy, m.yy - d, m.yz};
  const Vec3 r2{m.xz, m.yz, m.zz - d};
  const Vec3 cand[3] = {r0.cross(r1), r0.cross(r2), r1.cross(r2)};
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (cand[i].norm() > cand[best].norm()) best = i;
  if (cand[best].norm() == 0.0) return out;  // fully degenerate spectrum

  out.eigenvalues = lambda;
  out.normal = sign_rule(cand[best].normalized());
  for (int i = 0; i < 3; ++i) out.curvature[i] = lambda[i] / total;
  out.valid = true;
  return out;
}

OracleLoss oracle_loss(std::span<const double> pred_centroid,
                       std::span<const double> pred_occ_logits,
                       std::span<const double> pred_normal,
                       std::span<const double> pred_curvature,
                       std::span<const TargetRecord> records) {
  OracleLoss out;
  const size_t m = records.size();

  double cent_sum = 0;
  size_t cent_n = 0;
  double occ_sum = 0;
  size_t occ_n = 0;
  double nor_sum = 0, curv_sum = 0;
  size_t surf_n = 0;

  for (size_t r = 0; r < m; ++r) {
    const TargetRecord& rec = records[r];
    for (int s = 0; s < kPyramidGrids; ++s) {
      const double t = rec.stats.occupancy[s] ? 1.0 : 0.0;
      const double z = pred_occ_logits[r * kPyramidGrids + s];
      const double sig = 1.0 / (1.0 + std::exp(-z));
      occ_sum += -(t * std::log(sig) + (1.0 - t) * std::log(1.0 - sig));
      ++occ_n;
      if (rec.stats.occupancy[s]) {
        for (int a = 0; a < 3; ++a) {
          const double d = pred_centroid[r * kPyramidGrids * 3 + 3 * s + a] -
                           static_cast<double>(rec.stats.centroid[3 * s + a]);
          cent_sum += d * d;
          ++cent_n;
        }
      }
    }
    if (rec.surface.valid) {
      for (int a = 0; a < 3; ++a) {
        const double dn =
            pred_normal[r * 3 + a] - static_cast<double>(rec.surface.normal[a]);
        const double dc =
            pred_curvature[r * 3 + a] - static_cast<double>(rec.surface.curvature[a]);
        nor_sum += dn * dn;
        curv_sum += dc * dc;
      }
      ++surf_n;
    }
  }

  out.l_cent = cent_n ? cent_sum / static_cast<double>(cent_n) : 0.0;
  out.l_occ = occ_n ? occ_sum / static_cast<double>(occ_n) : 0.0;
  out.l_nor = surf_n ? nor_sum / static_cast<double>(3 * surf_n) : 0.0;
  out.l_curv = surf_n ? curv_sum / static_cast<double>(3 * surf_n) : 0.0;
  out.l_point = out.l_cent + out.l_occ;
  out.l_surface = out.l_curv + out.l_nor;
  out.total = out.l_point + out.l_surface;
  return out;
}

}  // namespace geomae::oracle
