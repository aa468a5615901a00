#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geomae/model.hpp"
#include "geomae/scene_synth.hpp"
#include "geomae/voxelizer.hpp"

namespace geomae {

struct TrainConfig {
  ModelConfig model;
  GridConfig grid;
  std::vector<SceneSpec> scenes;
  double mask_ratio = 0.7;
  uint64_t seed = 0;
  OptimConfig optim;
  int steps = 0;
  int batch_size = 1;
  int debug_inject_nan_step = -1;  // test hook for the divergence exit path
};

struct TrainResult {
  std::vector<LossReport> history;  // one entry per step
  std::string loss_csv_path;
  std::string params_path;
};

// Precomputed per-scene training inputs.
struct PreparedScene {
  SceneBatch batch;
  std::vector<TargetRecord> records;
};

PreparedScene prepare_scene(const SceneSpec& scene, const GridConfig& grid, double mask_ratio,
                            uint64_t mask_seed);

// Runs the full pre-training loop; writes <out_dir>/loss.csv (header
// step,l_cent,l_occ,l_nor,l_curv,total) and <out_dir>/params.gmp.
// Throws DivergedError when any loss component goes non-finite.
TrainResult pretrain(const TrainConfig& cfg, const std::string& out_dir);

// A standard mixed batch of synthetic scenes (tilted planes and spheres)
// sized for the given grid; used by the CLI and tests.
std::vector<SceneSpec> make_training_scenes(int count, uint64_t seed, const GridConfig& grid);

}  // namespace geomae
