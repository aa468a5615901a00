#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "geomae/autodiff.hpp"
#include "geomae/geo_targets.hpp"
#include "geomae/masking.hpp"
#include "geomae/pointcloud.hpp"
#include "geomae/voxelizer.hpp"

namespace geomae {

struct ModelConfig {
  int d_model = 128;
  int n_heads = 2;
  int d_hidden = 256;
  int encoder_blocks = 2;
  int decoder_blocks = 2;  // per decoder
  int window_x = 4, window_y = 4;
  int vfe_c1 = 32, vfe_c2 = 128;
  int head_hidden = 128;
  bool sign_invariant_normal_loss = false;

  void validate() const;  // throws ConfigError
};

struct Param {
  std::string name;
  int rows = 0, cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> m, v;  // AdamW state

  size_t size() const { return value.size(); }
};

struct OptimConfig {
  double lr = 1e-5;
  double beta1 = 0.9, beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class ParamStore {
 public:
  Param& create(const std::string& name, int rows, int cols);
  Param* find(const std::string& name);
  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }
  size_t total_size() const;

  void zero_grad();
  void scale_grad(double s);
  // Decoupled weight decay: p -= lr * (mhat / (sqrt(vhat) + eps) + wd * p).
  void adamw_step(const OptimConfig& opt);

  void save(const std::string& path) const;  // "GMP1" blob
  void load(const std::string& path);        // shapes must match

 private:
  std::vector<Param> params_;
  int64_t step_ = 0;
};

// Per-scene model input: voxel tokens in ascending voxel-id order, their
// per-point VFE features, BEV coordinates, and the masked/visible split.
struct SceneBatch {
  int n_tokens = 0;
  int n_points = 0;
  std::vector<double> point_features;            // n_points x 9, grouped by token
  std::vector<std::pair<int, int>> spans;        // per token, row span into point_features
  std::vector<std::array<int, 2>> coords;        // per token (i_x, i_y)
  std::vector<int> visible_rows, masked_rows;    // token indices, ascending
  std::vector<uint64_t> masked_voxel_ids;        // aligned with masked_rows
};

SceneBatch make_scene_batch(const PointCloud& cloud, const VoxelPartition& partition,
                            const MaskSpec& mask);

// Tokens attending together in one block: row-index groups keyed by window.
// `shifted` offsets the grid by half a window in both axes.
std::vector<std::vector<int>> window_groups(std::span<const std::array<int, 2>> coords,
                                            int wx, int wy, bool shifted);

// Sinusoidal encoding of integer BEV coordinates; first half of the channels
// encodes i_x, second half i_y.
std::vector<double> positional_encoding(std::span<const std::array<int, 2>> coords,
                                        int d_model);

struct LossReport {
  double l_cent = 0, l_occ = 0, l_curv = 0, l_nor = 0;
  double l_point = 0, l_surface = 0, total = 0;
  int64_t occupied_slots = 0, valid_records = 0, masked_tokens = 0;

  bool finite() const;
};

// One full differentiable pass over a scene. Ids stay valid as long as the
// graph lives; tests reach into intermediate outputs through them.
struct Forward {
  ad::Graph graph;
  ad::Id tokens = -1;       // (n_tokens, d) after VFE
  ad::Id encoded = -1;      // (n_visible, d)
  ad::Id dec_point = -1;    // (n_tokens, d)
  ad::Id dec_surface = -1;  // (n_tokens, d)
  ad::Id pred_cent = -1, pred_occ = -1, pred_nor = -1, pred_curv = -1;  // (M, *)
  ad::Id l_cent = -1, l_occ = -1, l_nor = -1, l_curv = -1;
  ad::Id l_point = -1, l_surface = -1, total = -1;
  LossReport report;
  std::vector<std::pair<Param*, ad::Id>> bindings;
};

class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Stages, usable independently in tests. `fwd` carries the graph and the
  // parameter bindings for the pass.
  ad::Id vfe_embed(Forward& fwd, const SceneBatch& batch);
  ad::Id encode(Forward& fwd, ad::Id tokens, const SceneBatch& batch);
  std::pair<ad::Id, ad::Id> decode_dual(Forward& fwd, ad::Id encoded, const SceneBatch& batch);
  void heads(Forward& fwd, ad::Id dec_point, ad::Id dec_surface, const SceneBatch& batch);
  void compute_loss(Forward& fwd, const SceneBatch& batch,
                    std::span<const TargetRecord> records);

  // forward() composes the stages; backward() accumulates into Param::grad.
  void forward(Forward& fwd, const SceneBatch& batch, std::span<const TargetRecord> records);
  void backward(Forward& fwd);              // from fwd.total
  void backward_from(Forward& fwd, ad::Id root);

 private:
  ad::Id bind(Forward& fwd, Param& p);
  ad::Id linear(Forward& fwd, ad::Id x, const std::string& prefix);
  ad::Id transformer_block(Forward& fwd, ad::Id x,
                           std::span<const std::array<int, 2>> coords, bool shifted,
                           const std::string& prefix);
  ad::Id mlp_head(Forward& fwd, ad::Id x, const std::string& prefix);

  ModelConfig cfg_;
  ParamStore store_;
};

}  // namespace geomae
