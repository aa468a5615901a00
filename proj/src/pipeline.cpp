#include "geomae/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "geomae/error.hpp"
#include "geomae/geo_targets.hpp"
#include "geomae/masking.hpp"
#include "geomae/oracle.hpp"

namespace geomae {

GenTargetsSummary gen_targets(const PointCloud& cloud, const GridConfig& grid, double mask_ratio,
                              uint64_t seed, int threads, const std::string& out_path) {
  GridConfig config = grid;
  config.validate();

  const VoxelPartition partition = voxelize(cloud, config);
  const auto ids = partition.nonempty_ids();
  const MaskSpec mask = select_mask(ids, mask_ratio, seed);
  const auto records =
      build_target_records(cloud, partition, mask.masked_ids, PyramidSpec{}, threads);

  if (!out_path.empty()) write_targets(out_path, records, config);

  GenTargetsSummary s;
  s.n_points = cloud.count();
  s.n_in_range = partition.order.size();
  s.n_nonempty = ids.size();
  s.n_masked = records.size();
  size_t valid = 0;
  for (const auto& r : records) valid += r.surface.valid ? 1 : 0;
  s.valid_surface_fraction = records.empty() ? 0.0 : static_cast<double>(valid) / records.size();
  return s;
}

namespace {

double angle_between(const Vec3& a, const Vec3& b) {
  const double d = std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0);
  return std::acos(d);
}

}  // namespace

VerifyReport verify_targets(const PointCloud& cloud, const GridConfig& grid, double mask_ratio,
                            uint64_t seed, const TargetFile* external,
                            const VerifyTolerances& tol) {
  GridConfig config = grid;
  config.validate();

  const VoxelPartition partition = voxelize(cloud, config);
  const auto ids = partition.nonempty_ids();
  const MaskSpec mask = select_mask(ids, mask_ratio, seed);
  const auto records = build_target_records(cloud, partition, mask.masked_ids, PyramidSpec{});

  VerifyReport rep;
  rep.masked = records.size();

  for (const auto& rec : records) {
    // point statistics must agree bit-for-bit after f32 rounding
    const PointStatTargets ostats = oracle::oracle_point_stats(cloud, rec.voxel_id, config);
    if (ostats.occupancy != rec.stats.occupancy || ostats.centroid != rec.stats.centroid)
      ++rep.stat_mismatches;

    // surface properties compared against tolerances
    const auto osurf = oracle::oracle_surface_targets(cloud, rec.voxel_id, config);
    if (osurf.valid != rec.surface.valid) {
      ++rep.valid_flag_mismatches;
      continue;
    }
    if (!rec.surface.valid) continue;

    ++rep.surface_compared;
    const auto gathered = gather_neighborhood(cloud, partition, rec.voxel_id);
    const SymMat3 cov = covariance(gathered);
    const Eig3 eig = eig3_sym(cov);
    const double total = eig.values[0] + eig.values[1] + eig.values[2];
    for (int k = 0; k < 3; ++k) {
      rep.max_eig_dev = std::max(rep.max_eig_dev,
                                 std::abs(eig.values[k] - osurf.eigenvalues[k]));
      rep.max_curv_dev = std::max(rep.max_curv_dev,
                                  std::abs(eig.values[k] / total - osurf.curvature[k]));
    }

    // eigenvectors are only comparable away from degeneracy
    const double fro = cov.frobenius();
    const double gap = std::min(eig.values[0] - eig.values[1], eig.values[1] - eig.values[2]);
    if (fro > 0.0 && gap > tol.degenerate_gap_rel * fro) {
      const Vec3 pn = canonicalize_normal(
          Vec3{eig.vectors[2][0], eig.vectors[2][1], eig.vectors[2][2]});
      rep.max_normal_angle = std::max(rep.max_normal_angle, angle_between(pn, osurf.normal));
      ++rep.normals_compared;
    }
  }

  if (external) {
    if (external->records.size() != records.size()) {
      rep.file_mismatches = std::max<size_t>(external->records.size(), records.size());
    } else {
      for (size_t i = 0; i < records.size(); ++i) {
        const TargetRecord& a = records[i];
        const TargetRecord& b = external->records[i];
        const bool same = a.voxel_id == b.voxel_id && a.stats.centroid == b.stats.centroid &&
                          a.stats.occupancy == b.stats.occupancy &&
                          a.surface.normal == b.surface.normal &&
                          a.surface.curvature == b.surface.curvature &&
                          a.surface.valid == b.surface.valid;
        if (!same) ++rep.file_mismatches;
      }
    }
  }
  return rep;
}

namespace {

using nlohmann::json;

std::array<double, 3> parse_triple(const json& j) {
  if (!j.is_array() || j.size() != 3) throw IoError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

GridConfig grid_from_json(const json& j) {
  GridConfig g;
  if (j.contains("preset")) {
    const std::string p = j.at("preset").get<std::string>();
    if (p == "nuscenes") return preset_nuscenes();
    if (p == "waymo") return preset_waymo();
    throw ConfigError("unknown preset: " + p);
  }
  g.range_min = parse_triple(j.at("range_min"));
  g.range_max = parse_triple(j.at("range_max"));
  g.voxel_size = parse_triple(j.at("voxel_size"));
  g.validate();
  return g;
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.d_model = j.value("d_model", m.d_model);
  m.n_heads = j.value("n_heads", m.n_heads);
  m.d_hidden = j.value("d_hidden", m.d_hidden);
  m.encoder_blocks = j.value("encoder_blocks", m.encoder_blocks);
  m.decoder_blocks = j.value("decoder_blocks", m.decoder_blocks);
  if (j.contains("window")) {
    const auto& w = j.at("window");
    if (!w.is_array() || w.size() != 2) throw IoError("window must be [wx, wy]");
    m.window_x = w[0].get<int>();
    m.window_y = w[1].get<int>();
  }
  if (j.contains("vfe_channels")) {
    const auto& c = j.at("vfe_channels");
    if (!c.is_array() || c.size() != 2) throw IoError("vfe_channels must be [c1, c2]");
    m.vfe_c1 = c[0].get<int>();
    m.vfe_c2 = c[1].get<int>();
  }
  m.head_hidden = j.value("head_hidden", m.head_hidden);
  m.sign_invariant_normal_loss =
      j.value("sign_invariant_normal_loss", m.sign_invariant_normal_loss);
  m.validate();
  return m;
}

}  // namespace

GridConfig parse_grid_json(const std::string& json_text) {
  try {
    return grid_from_json(json::parse(json_text));
  } catch (const json::exception& e) {
    throw IoError(std::string("grid config parse error: ") + e.what());
  }
}

ModelConfig parse_model_json(const std::string& json_text) {
  try {
    return model_from_json(json::parse(json_text));
  } catch (const json::exception& e) {
    throw IoError(std::string("model config parse error: ") + e.what());
  }
}

TrainConfig parse_train_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("train config parse error: ") + e.what());
  }
  try {
    TrainConfig cfg;
    if (j.contains("model")) cfg.model = model_from_json(j.at("model"));
    cfg.grid = grid_from_json(j.at("grid"));
    cfg.mask_ratio = j.value("mask_ratio", cfg.mask_ratio);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.optim.lr = j.value("lr", cfg.optim.lr);
    if (j.contains("betas")) {
      const auto& b = j.at("betas");
      if (!b.is_array() || b.size() != 2) throw IoError("betas must be [beta1, beta2]");
      cfg.optim.beta1 = b[0].get<double>();
      cfg.optim.beta2 = b[1].get<double>();
    }
    cfg.optim.eps = j.value("eps", cfg.optim.eps);
    cfg.optim.weight_decay = j.value("weight_decay", cfg.optim.weight_decay);
    cfg.steps = j.value("steps", cfg.steps);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.debug_inject_nan_step = j.value("debug_inject_nan_step", cfg.debug_inject_nan_step);

    if (j.contains("scenes")) {
      for (const auto& js : j.at("scenes"))
        cfg.scenes.push_back(parse_scene_spec(js.dump()));
    }
    if (j.contains("generate_scenes")) {
      const auto& gs = j.at("generate_scenes");
      const int count = gs.at("count").get<int>();
      const uint64_t gseed = gs.value("seed", cfg.seed);
      auto generated = make_training_scenes(count, gseed, cfg.grid);
      cfg.scenes.insert(cfg.scenes.end(), generated.begin(), generated.end());
    }
    return cfg;
  } catch (const json::exception& e) {
    throw IoError(std::string("train config field error: ") + e.what());
  }
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open train config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

}  // namespace geomae
