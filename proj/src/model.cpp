#include "geomae/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "geomae/error.hpp"
#include "geomae/rng.hpp"

namespace geomae {

void ModelConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || d_hidden <= 0) throw ConfigError("model dims must be positive");
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (d_model % 4 != 0) throw ConfigError("d_model must be divisible by 4");
  if (vfe_c1 % 2 != 0 || vfe_c2 % 2 != 0) throw ConfigError("vfe channels must be even");
  if (vfe_c2 != d_model) throw ConfigError("final VFE channel count must equal d_model");
  if (window_x <= 0 || window_y <= 0) throw ConfigError("window must be positive");
  if (encoder_blocks <= 0 || decoder_blocks <= 0) throw ConfigError("block counts must be positive");
}

Param& ParamStore::create(const std::string& name, int rows, int cols) {
  Param p;
  p.name = name;
  p.rows = rows;
  p.cols = cols;
  const size_t sz = static_cast<size_t>(rows) * cols;
  p.value.assign(sz, 0.0);
  p.grad.assign(sz, 0.0);
  p.m.assign(sz, 0.0);
  p.v.assign(sz, 0.0);
  params_.push_back(std::move(p));
  return params_.back();
}

Param* ParamStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

size_t ParamStore::total_size() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void ParamStore::scale_grad(double s) {
  for (auto& p : params_)
    for (double& g : p.grad) g *= s;
}

void ParamStore::adamw_step(const OptimConfig& opt) {
  ++step_;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step_));
  for (auto& p : params_) {
    for (size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      p.m[i] = opt.beta1 * p.m[i] + (1.0 - opt.beta1) * g;
      p.v[i] = opt.beta2 * p.v[i] + (1.0 - opt.beta2) * g * g;
      const double mhat = p.m[i] / bc1;
      const double vhat = p.v[i] / bc2;
      p.value[i] -= opt.lr * (mhat / (std::sqrt(vhat) + opt.eps) + opt.weight_decay * p.value[i]);
    }
  }
}

namespace {
constexpr char kParamMagic[4] = {'G', 'M', 'P', '1'};

void put_u32(std::ofstream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}
void put_u64(std::ofstream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}
uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}
uint64_t get_u64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}
}  // namespace

void ParamStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(kParamMagic, 4);
  put_u32(out, 1);
  put_u64(out, params_.size());
  for (const auto& p : params_) {
    put_u32(out, static_cast<uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<uint32_t>(p.rows));
    put_u32(out, static_cast<uint32_t>(p.cols));
    for (double v : p.value) {
      uint64_t bits;
      std::memcpy(&bits, &v, 8);
      put_u64(out, bits);
    }
  }
  if (!out) throw IoError("short write to " + path);
}

void ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kParamMagic, 4) != 0)
    throw IoError("not a GMP1 file: " + path);
  if (get_u32(in) != 1) throw IoError("unsupported GMP1 version in " + path);
  const uint64_t count = get_u64(in);
  if (count != params_.size()) throw IoError("parameter count mismatch in " + path);
  for (auto& p : params_) {
    const uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint32_t r = get_u32(in), c = get_u32(in);
    if (name != p.name || r != static_cast<uint32_t>(p.rows) ||
        c != static_cast<uint32_t>(p.cols))
      throw IoError("parameter layout mismatch at " + p.name + " in " + path);
    for (double& v : p.value) {
      const uint64_t bits = get_u64(in);
      std::memcpy(&v, &bits, 8);
    }
    if (!in) throw IoError("unexpected EOF in " + path);
  }
}

SceneBatch make_scene_batch(const PointCloud& cloud, const VoxelPartition& partition,
                            const MaskSpec& mask) {
  SceneBatch b;
  b.n_tokens = static_cast<int>(partition.groups.size());
  b.coords.resize(b.n_tokens);
  b.spans.resize(b.n_tokens);

  size_t total_points = 0;
  for (const auto& g : partition.groups) total_points += g.count;
  b.n_points = static_cast<int>(total_points);
  b.point_features.resize(total_points * 9);

  const GridConfig& cfg = partition.config;
  int row = 0;
  for (int t = 0; t < b.n_tokens; ++t) {
    const VoxelGroup& g = partition.groups[t];
    const auto idx = cfg.unpack_id(g.id);
    b.coords[t] = {static_cast<int>(idx[0]), static_cast<int>(idx[1])};
    b.spans[t] = {row, row + static_cast<int>(g.count)};

    const Vec3 corner = cfg.voxel_corner(g.id);
    const Vec3 center = corner + Vec3{cfg.voxel_size[0] / 2, cfg.voxel_size[1] / 2,
                                      cfg.voxel_size[2] / 2};
    Vec3 mean{};
    for (uint32_t pi : partition.group_points(t)) mean += cloud.point(pi);
    mean = mean * (1.0 / g.count);

    for (uint32_t pi : partition.group_points(t)) {
      const Vec3 p = cloud.point(pi);
      double* f = b.point_features.data() + static_cast<size_t>(row) * 9;
      f[0] = p.x;
      f[1] = p.y;
      f[2] = p.z;
      f[3] = p.x - mean.x;
      f[4] = p.y - mean.y;
      f[5] = p.z - mean.z;
      f[6] = p.x - center.x;
      f[7] = p.y - center.y;
      f[8] = p.z - center.z;
      ++row;
    }
  }

  // Mask ids -> token rows (groups are ascending by id).
  b.masked_voxel_ids = mask.masked_ids;
  for (uint64_t id : mask.masked_ids) {
    const int64_t g = partition.find_group(id);
    if (g < 0) throw GeomaeError("mask id " + std::to_string(id) + " is not a non-empty voxel");
    b.masked_rows.push_back(static_cast<int>(g));
  }
  for (uint64_t id : mask.visible_ids) {
    const int64_t g = partition.find_group(id);
    if (g < 0) throw GeomaeError("visible id " + std::to_string(id) + " is not a non-empty voxel");
    b.visible_rows.push_back(static_cast<int>(g));
  }
  return b;
}

std::vector<std::vector<int>> window_groups(std::span<const std::array<int, 2>> coords,
                                            int wx, int wy, bool shifted) {
  const int sx = shifted ? wx / 2 : 0;
  const int sy = shifted ? wy / 2 : 0;
  std::map<std::pair<int, int>, std::vector<int>> buckets;
  for (size_t i = 0; i < coords.size(); ++i) {
    const int bx = (coords[i][0] + sx) / wx;
    const int by = (coords[i][1] + sy) / wy;
    buckets[{by, bx}].push_back(static_cast<int>(i));
  }
  std::vector<std::vector<int>> out;
  out.reserve(buckets.size());
  for (auto& [key, rows] : buckets) out.push_back(std::move(rows));
  return out;
}

std::vector<double> positional_encoding(std::span<const std::array<int, 2>> coords,
                                        int d_model) {
  const int half = d_model / 2;
  std::vector<double> pe(coords.size() * static_cast<size_t>(d_model));
  for (size_t i = 0; i < coords.size(); ++i) {
    for (int axis = 0; axis < 2; ++axis) {
      const double t = static_cast<double>(coords[i][axis]);
      for (int k = 0; 2 * k < half; ++k) {
        const double freq = std::pow(10000.0, -2.0 * k / half);
        pe[i * d_model + axis * half + 2 * k] = std::sin(t * freq);
        if (2 * k + 1 < half) pe[i * d_model + axis * half + 2 * k + 1] = std::cos(t * freq);
      }
    }
  }
  return pe;
}

bool LossReport::finite() const {
  return std::isfinite(l_cent) && std::isfinite(l_occ) && std::isfinite(l_curv) &&
         std::isfinite(l_nor) && std::isfinite(l_point) && std::isfinite(l_surface) &&
         std::isfinite(total);
}

Model::Model(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  XorShift64Star rng(init_seed);

  auto xavier = [&](Param& p) {
    const double limit = std::sqrt(6.0 / (p.rows + p.cols));
    for (double& v : p.value) v = rng.uniform(-limit, limit);
  };
  auto weight = [&](const std::string& name, int r, int c) { xavier(store_.create(name, r, c)); };
  auto bias = [&](const std::string& name, int n) { store_.create(name, 1, n); };
  auto make_ln = [&](const std::string& prefix) {
    Param& g = store_.create(prefix + ".gamma", 1, cfg_.d_model);
    std::fill(g.value.begin(), g.value.end(), 1.0);
    bias(prefix + ".beta", cfg_.d_model);
  };
  auto make_block = [&](const std::string& prefix) {
    make_ln(prefix + ".ln1");
    weight(prefix + ".attn.wq", cfg_.d_model, cfg_.d_model);
    bias(prefix + ".attn.bq", cfg_.d_model);
    weight(prefix + ".attn.wk", cfg_.d_model, cfg_.d_model);
    bias(prefix + ".attn.bk", cfg_.d_model);
    weight(prefix + ".attn.wv", cfg_.d_model, cfg_.d_model);
    bias(prefix + ".attn.bv", cfg_.d_model);
    weight(prefix + ".attn.wo", cfg_.d_model, cfg_.d_model);
    bias(prefix + ".attn.bo", cfg_.d_model);
    make_ln(prefix + ".ln2");
    weight(prefix + ".ffn.w1", cfg_.d_model, cfg_.d_hidden);
    bias(prefix + ".ffn.b1", cfg_.d_hidden);
    weight(prefix + ".ffn.w2", cfg_.d_hidden, cfg_.d_model);
    bias(prefix + ".ffn.b2", cfg_.d_model);
  };
  auto make_head = [&](const std::string& prefix, int out_dim) {
    weight(prefix + ".w1", cfg_.d_model, cfg_.head_hidden);
    bias(prefix + ".b1", cfg_.head_hidden);
    weight(prefix + ".w2", cfg_.head_hidden, out_dim);
    bias(prefix + ".b2", out_dim);
  };

  weight("vfe.l1.w", 9, cfg_.vfe_c1 / 2);
  bias("vfe.l1.b", cfg_.vfe_c1 / 2);
  weight("vfe.l2.w", cfg_.vfe_c1, cfg_.vfe_c2 / 2);
  bias("vfe.l2.b", cfg_.vfe_c2 / 2);

  for (int b = 0; b < cfg_.encoder_blocks; ++b) make_block("enc.b" + std::to_string(b));

  Param& mt = store_.create("mask_token", 1, cfg_.d_model);
  for (double& v : mt.value) v = 0.02 * rng.normal();

  for (int b = 0; b < cfg_.decoder_blocks; ++b) make_block("dec.point.b" + std::to_string(b));
  for (int b = 0; b < cfg_.decoder_blocks; ++b) make_block("dec.surf.b" + std::to_string(b));

  make_head("head.cent", kPyramidGrids * 3);
  make_head("head.occ", kPyramidGrids);
  make_head("head.nor", 3);
  make_head("head.curv", 3);
}

ad::Id Model::bind(Forward& fwd, Param& p) {
  for (const auto& [param, id] : fwd.bindings)
    if (param == &p) return id;
  const ad::Id id = fwd.graph.input(p.value, p.rows, p.cols);
  fwd.bindings.emplace_back(&p, id);
  return id;
}

ad::Id Model::linear(Forward& fwd, ad::Id x, const std::string& prefix) {
  Param* w = store_.find(prefix + ".w");
  Param* b = store_.find(prefix + ".b");
  return fwd.graph.add_rowvec(fwd.graph.matmul(x, bind(fwd, *w)), bind(fwd, *b));
}

ad::Id Model::vfe_embed(Forward& fwd, const SceneBatch& batch) {
  if (batch.n_tokens == 0) throw GeomaeError("vfe_embed on an empty partition");
  ad::Graph& g = fwd.graph;
  const ad::Id feats = g.constant(batch.point_features, batch.n_points, 9);

  auto vfe_layer = [&](ad::Id x, const std::string& prefix) {
    const ad::Id h = g.gelu(linear(fwd, x, prefix));
    const ad::Id pooled = g.segment_max(h, batch.spans);
    const ad::Id spread = g.segment_broadcast(pooled, batch.spans, batch.n_points);
    return g.concat_cols(h, spread);
  };

  const ad::Id h1 = vfe_layer(feats, "vfe.l1");
  const ad::Id h2 = vfe_layer(h1, "vfe.l2");
  fwd.tokens = g.segment_max(h2, batch.spans);
  return fwd.tokens;
}

ad::Id Model::transformer_block(Forward& fwd, ad::Id x,
                                std::span<const std::array<int, 2>> coords, bool shifted,
                                const std::string& prefix) {
  if (coords.empty()) return x;  // no tokens, nothing to attend over
  ad::Graph& g = fwd.graph;
  const int d = cfg_.d_model;
  const int dh = d / cfg_.n_heads;

  // pre-norm attention
  const ad::Id xn = g.layer_norm(x, bind(fwd, *store_.find(prefix + ".ln1.gamma")),
                                 bind(fwd, *store_.find(prefix + ".ln1.beta")));
  const ad::Id q = g.add_rowvec(g.matmul(xn, bind(fwd, *store_.find(prefix + ".attn.wq"))),
                                bind(fwd, *store_.find(prefix + ".attn.bq")));
  const ad::Id k = g.add_rowvec(g.matmul(xn, bind(fwd, *store_.find(prefix + ".attn.wk"))),
                                bind(fwd, *store_.find(prefix + ".attn.bk")));
  const ad::Id v = g.add_rowvec(g.matmul(xn, bind(fwd, *store_.find(prefix + ".attn.wv"))),
                                bind(fwd, *store_.find(prefix + ".attn.bv")));

  const auto groups = window_groups(coords, cfg_.window_x, cfg_.window_y, shifted);
  std::vector<ad::Id> pieces;
  std::vector<int> piece_rows;
  pieces.reserve(groups.size());
  for (const auto& rows : groups) {
    const ad::Id qw = g.gather_rows(q, rows);
    const ad::Id kw = g.gather_rows(k, rows);
    const ad::Id vw = g.gather_rows(v, rows);
    std::vector<ad::Id> head_outs;
    for (int h = 0; h < cfg_.n_heads; ++h) {
      const ad::Id qh = g.slice_cols(qw, h * dh, (h + 1) * dh);
      const ad::Id kh = g.slice_cols(kw, h * dh, (h + 1) * dh);
      const ad::Id vh = g.slice_cols(vw, h * dh, (h + 1) * dh);
      const ad::Id scores = g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
      const ad::Id attn = g.softmax_rows(scores);
      head_outs.push_back(g.matmul(attn, vh));
    }
    ad::Id merged = head_outs[0];
    for (size_t h = 1; h < head_outs.size(); ++h) merged = g.concat_cols(merged, head_outs[h]);
    pieces.push_back(merged);
    piece_rows.insert(piece_rows.end(), rows.begin(), rows.end());
  }

  // stitch window outputs back into token order
  const ad::Id stacked = g.concat_rows(pieces);
  std::vector<int> inverse(piece_rows.size());
  for (size_t i = 0; i < piece_rows.size(); ++i) inverse[piece_rows[i]] = static_cast<int>(i);
  const ad::Id attn_all = g.gather_rows(stacked, inverse);
  const ad::Id proj =
      g.add_rowvec(g.matmul(attn_all, bind(fwd, *store_.find(prefix + ".attn.wo"))),
                   bind(fwd, *store_.find(prefix + ".attn.bo")));
  const ad::Id x1 = g.add(x, proj);

  // pre-norm feed-forward
  const ad::Id x1n = g.layer_norm(x1, bind(fwd, *store_.find(prefix + ".ln2.gamma")),
                                  bind(fwd, *store_.find(prefix + ".ln2.beta")));
  const ad::Id ff = g.add_rowvec(
      g.matmul(g.gelu(g.add_rowvec(g.matmul(x1n, bind(fwd, *store_.find(prefix + ".ffn.w1"))),
                                   bind(fwd, *store_.find(prefix + ".ffn.b1")))),
               bind(fwd, *store_.find(prefix + ".ffn.w2"))),
      bind(fwd, *store_.find(prefix + ".ffn.b2")));
  return g.add(x1, ff);
}

ad::Id Model::encode(Forward& fwd, ad::Id tokens, const SceneBatch& batch) {
  ad::Graph& g = fwd.graph;
  std::vector<std::array<int, 2>> vis_coords;
  vis_coords.reserve(batch.visible_rows.size());
  for (int r : batch.visible_rows) vis_coords.push_back(batch.coords[r]);

  const auto pe = positional_encoding(vis_coords, cfg_.d_model);
  ad::Id x = g.add(g.gather_rows(tokens, batch.visible_rows),
                   g.constant(pe, static_cast<int>(vis_coords.size()), cfg_.d_model));
  for (int b = 0; b < cfg_.encoder_blocks; ++b)
    x = transformer_block(fwd, x, vis_coords, b % 2 == 1, "enc.b" + std::to_string(b));
  fwd.encoded = x;
  return x;
}

std::pair<ad::Id, ad::Id> Model::decode_dual(Forward& fwd, ad::Id encoded,
                                             const SceneBatch& batch) {
  ad::Graph& g = fwd.graph;
  const int n_vis = static_cast<int>(batch.visible_rows.size());
  const int n_masked = static_cast<int>(batch.masked_rows.size());

  std::vector<std::array<int, 2>> masked_coords;
  masked_coords.reserve(n_masked);
  for (int r : batch.masked_rows) masked_coords.push_back(batch.coords[r]);

  // decoder input: encoder outputs at visible positions, the shared mask
  // token plus its positional encoding at masked positions
  ad::Id full;
  if (n_masked > 0) {
    const auto pe = positional_encoding(masked_coords, cfg_.d_model);
    const ad::Id masked_block =
        g.add(g.broadcast_row(bind(fwd, *store_.find("mask_token")), n_masked),
              g.constant(pe, n_masked, cfg_.d_model));
    const std::array<ad::Id, 2> parts{encoded, masked_block};
    full = g.concat_rows(parts);
  } else {
    full = encoded;
  }

  std::vector<int> order(batch.n_tokens, -1);
  for (int i = 0; i < n_vis; ++i) order[batch.visible_rows[i]] = i;
  for (int i = 0; i < n_masked; ++i) order[batch.masked_rows[i]] = n_vis + i;
  const ad::Id decoder_input = g.gather_rows(full, order);

  auto run_decoder = [&](const std::string& prefix) {
    ad::Id x = decoder_input;
    for (int b = 0; b < cfg_.decoder_blocks; ++b)
      x = transformer_block(fwd, x, batch.coords, b % 2 == 1, prefix + ".b" + std::to_string(b));
    return x;
  };
  fwd.dec_point = run_decoder("dec.point");
  fwd.dec_surface = run_decoder("dec.surf");
  return {fwd.dec_point, fwd.dec_surface};
}

ad::Id Model::mlp_head(Forward& fwd, ad::Id x, const std::string& prefix) {
  ad::Graph& g = fwd.graph;
  const ad::Id h = g.gelu(
      g.add_rowvec(g.matmul(x, bind(fwd, *store_.find(prefix + ".w1"))),
                   bind(fwd, *store_.find(prefix + ".b1"))));
  return g.add_rowvec(g.matmul(h, bind(fwd, *store_.find(prefix + ".w2"))),
                      bind(fwd, *store_.find(prefix + ".b2")));
}

void Model::heads(Forward& fwd, ad::Id dec_point, ad::Id dec_surface, const SceneBatch& batch) {
  ad::Graph& g = fwd.graph;
  const ad::Id at_masked_point = g.gather_rows(dec_point, batch.masked_rows);
  const ad::Id at_masked_surface = g.gather_rows(dec_surface, batch.masked_rows);
  fwd.pred_cent = mlp_head(fwd, at_masked_point, "head.cent");
  fwd.pred_occ = mlp_head(fwd, at_masked_point, "head.occ");
  fwd.pred_nor = mlp_head(fwd, at_masked_surface, "head.nor");
  fwd.pred_curv = mlp_head(fwd, at_masked_surface, "head.curv");
}

void Model::compute_loss(Forward& fwd, const SceneBatch& batch,
                         std::span<const TargetRecord> records) {
  if (records.size() != batch.masked_voxel_ids.size())
    throw GeomaeError("loss: prediction/record count mismatch");
  for (size_t i = 0; i < records.size(); ++i)
    if (records[i].voxel_id != batch.masked_voxel_ids[i])
      throw GeomaeError("loss: prediction/record voxel id mismatch at index " +
                        std::to_string(i));

  ad::Graph& g = fwd.graph;
  const size_t m = records.size();
  std::vector<double> t_cent(m * kPyramidGrids * 3), occ_mask(m * kPyramidGrids * 3);
  std::vector<double> t_occ(m * kPyramidGrids);
  std::vector<double> t_nor(m * 3), t_curv(m * 3), valid_mask(m * 3), valid_rows(m);

  int64_t occupied = 0, valid_records = 0;
  for (size_t r = 0; r < m; ++r) {
    const TargetRecord& rec = records[r];
    for (int s = 0; s < kPyramidGrids; ++s) {
      t_occ[r * kPyramidGrids + s] = rec.stats.occupancy[s] ? 1.0 : 0.0;
      if (rec.stats.occupancy[s]) ++occupied;
      for (int a = 0; a < 3; ++a) {
        t_cent[(r * kPyramidGrids + s) * 3 + a] = rec.stats.centroid[3 * s + a];
        occ_mask[(r * kPyramidGrids + s) * 3 + a] = rec.stats.occupancy[s] ? 1.0 : 0.0;
      }
    }
    const double valid = rec.surface.valid ? 1.0 : 0.0;
    if (rec.surface.valid) ++valid_records;
    valid_rows[r] = valid;
    for (int a = 0; a < 3; ++a) {
      t_nor[r * 3 + a] = rec.surface.normal[a];
      t_curv[r * 3 + a] = rec.surface.curvature[a];
      valid_mask[r * 3 + a] = valid;
    }
  }

  fwd.l_cent = g.mse_masked(fwd.pred_cent, std::move(t_cent), std::move(occ_mask));
  fwd.l_occ = g.bce_logits_mean(fwd.pred_occ, std::move(t_occ));
  fwd.l_nor = cfg_.sign_invariant_normal_loss
                  ? g.mse_masked_signflip(fwd.pred_nor, std::move(t_nor), std::move(valid_rows))
                  : g.mse_masked(fwd.pred_nor, std::move(t_nor), std::move(valid_mask));
  std::vector<double> valid_mask_curv(m * 3);
  for (size_t i = 0; i < m; ++i)
    for (int a = 0; a < 3; ++a) valid_mask_curv[i * 3 + a] = records[i].surface.valid ? 1.0 : 0.0;
  fwd.l_curv = g.mse_masked(fwd.pred_curv, std::move(t_curv), std::move(valid_mask_curv));

  fwd.l_point = g.add(fwd.l_cent, fwd.l_occ);
  fwd.l_surface = g.add(fwd.l_curv, fwd.l_nor);
  fwd.total = g.add(fwd.l_point, fwd.l_surface);

  fwd.report.l_cent = g.scalar(fwd.l_cent);
  fwd.report.l_occ = g.scalar(fwd.l_occ);
  fwd.report.l_nor = g.scalar(fwd.l_nor);
  fwd.report.l_curv = g.scalar(fwd.l_curv);
  fwd.report.l_point = g.scalar(fwd.l_point);
  fwd.report.l_surface = g.scalar(fwd.l_surface);
  fwd.report.total = g.scalar(fwd.total);
  fwd.report.occupied_slots = occupied;
  fwd.report.valid_records = valid_records;
  fwd.report.masked_tokens = static_cast<int64_t>(m);
}

void Model::forward(Forward& fwd, const SceneBatch& batch,
                    std::span<const TargetRecord> records) {
  const ad::Id tokens = vfe_embed(fwd, batch);
  const ad::Id encoded = encode(fwd, tokens, batch);
  const auto [dp, ds] = decode_dual(fwd, encoded, batch);
  heads(fwd, dp, ds, batch);
  compute_loss(fwd, batch, records);
}

void Model::backward(Forward& fwd) { backward_from(fwd, fwd.total); }

void Model::backward_from(Forward& fwd, ad::Id root) {
  fwd.graph.backward(root);
  for (const auto& [param, id] : fwd.bindings) {
    const auto gspan = fwd.graph.grad(id);
    for (size_t i = 0; i < param->grad.size(); ++i) param->grad[i] += gspan[i];
  }
}

}  // namespace geomae
