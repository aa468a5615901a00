#include "geomae/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "geomae/error.hpp"
#include "geomae/rng.hpp"

namespace geomae {

namespace {
// keeps mask seeds on a different stream than parameter init
constexpr uint64_t kMaskSeedSalt = 0x6D61736B5EEDull;
}  // namespace

PreparedScene prepare_scene(const SceneSpec& scene, const GridConfig& grid, double mask_ratio,
                            uint64_t mask_seed) {
  const PointCloud cloud = compose_scene(scene);
  const VoxelPartition partition = voxelize(cloud, grid);
  if (partition.groups.empty()) throw ConfigError("scene produced no in-range points");

  const auto ids = partition.nonempty_ids();
  const MaskSpec mask = select_mask(ids, mask_ratio, mask_seed);

  PreparedScene prep;
  prep.records = build_target_records(cloud, partition, mask.masked_ids, PyramidSpec{});
  prep.batch = make_scene_batch(cloud, partition, mask);
  return prep;
}

TrainResult pretrain(const TrainConfig& cfg, const std::string& out_dir) {
  GridConfig grid = cfg.grid;
  grid.validate();
  if (cfg.steps > 0 && cfg.scenes.empty()) throw ConfigError("no training scenes");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");

  std::filesystem::create_directories(out_dir);
  TrainResult result;
  result.loss_csv_path = out_dir + "/loss.csv";
  result.params_path = out_dir + "/params.gmp";

  std::ofstream csv(result.loss_csv_path, std::ios::trunc);
  if (!csv) throw IoError("cannot write " + result.loss_csv_path);
  csv << "step,l_cent,l_occ,l_nor,l_curv,total\n";

  std::vector<PreparedScene> prepared;
  if (cfg.steps > 0) {
    prepared.reserve(cfg.scenes.size());
    for (size_t i = 0; i < cfg.scenes.size(); ++i)
      prepared.push_back(prepare_scene(cfg.scenes[i], grid, cfg.mask_ratio,
                                       derive_seed(cfg.seed ^ kMaskSeedSalt, i)));
  }

  Model model(cfg.model, cfg.seed);

  char row[256];
  for (int step = 0; step < cfg.steps; ++step) {
    model.params().zero_grad();
    LossReport mean{};
    for (int b = 0; b < cfg.batch_size; ++b) {
      const size_t idx = (static_cast<size_t>(step) * cfg.batch_size + b) % prepared.size();
      Forward fwd;
      model.forward(fwd, prepared[idx].batch, prepared[idx].records);
      model.backward(fwd);
      mean.l_cent += fwd.report.l_cent;
      mean.l_occ += fwd.report.l_occ;
      mean.l_nor += fwd.report.l_nor;
      mean.l_curv += fwd.report.l_curv;
      mean.occupied_slots += fwd.report.occupied_slots;
      mean.valid_records += fwd.report.valid_records;
      mean.masked_tokens += fwd.report.masked_tokens;
    }
    const double inv = 1.0 / cfg.batch_size;
    mean.l_cent *= inv;
    mean.l_occ *= inv;
    mean.l_nor *= inv;
    mean.l_curv *= inv;
    mean.l_point = mean.l_cent + mean.l_occ;
    mean.l_surface = mean.l_curv + mean.l_nor;
    mean.total = mean.l_point + mean.l_surface;

    if (step == cfg.debug_inject_nan_step) mean.total = std::nan("");

    std::snprintf(row, sizeof row, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", step, mean.l_cent,
                  mean.l_occ, mean.l_nor, mean.l_curv, mean.total);
    csv << row;
    csv.flush();
    result.history.push_back(mean);

    if (!mean.finite())
      throw DivergedError("non-finite loss at step " + std::to_string(step), step);

    model.params().scale_grad(inv);
    model.params().adamw_step(cfg.optim);
  }

  model.params().save(result.params_path);
  return result;
}

std::vector<SceneSpec> make_training_scenes(int count, uint64_t seed, const GridConfig& grid) {
  std::vector<SceneSpec> scenes;
  scenes.reserve(count);

  const Vec3 lo{grid.range_min[0], grid.range_min[1], grid.range_min[2]};
  const Vec3 hi{grid.range_max[0], grid.range_max[1], grid.range_max[2]};
  const Vec3 extent = hi - lo;
  const Vec3 mid = lo + extent * 0.5;

  for (int i = 0; i < count; ++i) {
    XorShift64Star rng(derive_seed(seed, static_cast<uint64_t>(i)));
    SceneSpec scene;
    scene.seed = rng.next();
    scene.bounds = {lo, hi};

    // a large gently tilted plane
    ShapeSpec plane;
    plane.kind = ShapeKind::plane;
    plane.extent = {rng.uniform(0.5, 0.8) * extent.x, rng.uniform(0.5, 0.8) * extent.y};
    const double tilt = rng.uniform(0.0, 0.25);
    const double azimuth = rng.uniform(0.0, 2.0 * M_PI);
    plane.pose.rotation =
        rotation_axis_angle({std::cos(azimuth), std::sin(azimuth), 0.0}, tilt);
    plane.pose.translation = {mid.x + rng.uniform(-0.1, 0.1) * extent.x,
                              mid.y + rng.uniform(-0.1, 0.1) * extent.y,
                              lo.z + rng.uniform(0.3, 0.7) * extent.z};
    plane.density = 70.0;
    plane.noise_sigma = 0.01;
    scene.shapes.push_back(plane);

    if (rng.uniform() < 0.5) {
      ShapeSpec sphere;
      sphere.kind = ShapeKind::sphere;
      sphere.extent = {rng.uniform(0.10, 0.22) * std::min(extent.x, extent.y)};
      sphere.pose.translation = {lo.x + rng.uniform(0.25, 0.75) * extent.x,
                                 lo.y + rng.uniform(0.25, 0.75) * extent.y,
                                 mid.z + rng.uniform(-0.15, 0.15) * extent.z};
      sphere.density = 60.0;
      sphere.noise_sigma = 0.01;
      scene.shapes.push_back(sphere);
    }
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

}  // namespace geomae
