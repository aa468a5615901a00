#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "geomae/pointcloud.hpp"
#include "geomae/pointcloud_io.hpp"
#include "geomae/trainer.hpp"
#include "geomae/voxelizer.hpp"

namespace geomae {

// End-to-end target generation: voxelize, mask, build records, write GMT1.
struct GenTargetsSummary {
  size_t n_points = 0;
  size_t n_in_range = 0;
  size_t n_nonempty = 0;
  size_t n_masked = 0;
  double valid_surface_fraction = 0.0;
};

GenTargetsSummary gen_targets(const PointCloud& cloud, const GridConfig& grid, double mask_ratio,
                              uint64_t seed, int threads, const std::string& out_path);

// Production vs brute-force oracle agreement on one cloud.
struct VerifyTolerances {
  double eig_abs = 1e-10;
  double curvature_abs = 1e-9;
  double normal_angle_rad = 1e-8;
  double degenerate_gap_rel = 1e-6;  // skip eigenvector compare below this gap
};

struct VerifyReport {
  size_t masked = 0;
  size_t stat_mismatches = 0;       // centroid/occupancy not bit-equal
  size_t valid_flag_mismatches = 0;
  size_t surface_compared = 0;
  size_t normals_compared = 0;
  double max_eig_dev = 0.0;
  double max_curv_dev = 0.0;
  double max_normal_angle = 0.0;
  size_t file_mismatches = 0;  // only when checking an external target file

  bool pass(const VerifyTolerances& tol = {}) const {
    return stat_mismatches == 0 && valid_flag_mismatches == 0 && file_mismatches == 0 &&
           max_eig_dev <= tol.eig_abs && max_curv_dev <= tol.curvature_abs &&
           max_normal_angle <= tol.normal_angle_rad;
  }
};

VerifyReport verify_targets(const PointCloud& cloud, const GridConfig& grid, double mask_ratio,
                            uint64_t seed, const TargetFile* external = nullptr,
                            const VerifyTolerances& tol = {});

// JSON config parsing (field names match the struct members).
GridConfig parse_grid_json(const std::string& json_text);
ModelConfig parse_model_json(const std::string& json_text);
TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::string& path);

}  // namespace geomae
