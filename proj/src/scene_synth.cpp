#include "geomae/scene_synth.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "geomae/error.hpp"
#include "geomae/geo_targets.hpp"
#include "geomae/rng.hpp"

namespace geomae {

namespace {

size_t extent_arity(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::plane: return 2;
    case ShapeKind::sphere: return 1;
    case ShapeKind::box: return 3;
  }
  return 0;
}

// Local-frame sample on the surface plus its local normal. Draw order per
// point is pinned: shape parameters first, then one Gaussian for the noise.
struct SurfaceSample {
  Vec3 p;
  Vec3 n;
};

SurfaceSample sample_local(const ShapeSpec& spec, XorShift64Star& rng) {
  switch (spec.kind) {
    case ShapeKind::plane: {
      const double u = rng.uniform(), v = rng.uniform();
      return {{(u - 0.5) * spec.extent[0], (v - 0.5) * spec.extent[1], 0.0}, {0, 0, 1}};
    }
    case ShapeKind::sphere: {
      // area-uniform: cos(theta) uniform in [-1, 1]
      const double u = rng.uniform(), v = rng.uniform();
      const double ct = 1.0 - 2.0 * u;
      const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
      const double phi = 2.0 * M_PI * v;
      const Vec3 dir{st * std::cos(phi), st * std::sin(phi), ct};
      return {dir * spec.extent[0], dir};
    }
    case ShapeKind::box: {
      const double sx = spec.extent[0], sy = spec.extent[1], sz = spec.extent[2];
      const double area_xy = sx * sy, area_yz = sy * sz, area_zx = sz * sx;
      // faces ordered +x,-x,+y,-y,+z,-z
      const double areas[6] = {area_yz, area_yz, area_zx, area_zx, area_xy, area_xy};
      const double total = 2.0 * (area_xy + area_yz + area_zx);
      double pick = rng.uniform() * total;
      int face = 0;
      for (; face < 5; ++face) {
        if (pick < areas[face]) break;
        pick -= areas[face];
      }
      const double u = rng.uniform(), v = rng.uniform();
      const double hx = sx / 2, hy = sy / 2, hz = sz / 2;
      switch (face) {
        case 0: return {{hx, (u - 0.5) * sy, (v - 0.5) * sz}, {1, 0, 0}};
        case 1: return {{-hx, (u - 0.5) * sy, (v - 0.5) * sz}, {-1, 0, 0}};
        case 2: return {{(u - 0.5) * sx, hy, (v - 0.5) * sz}, {0, 1, 0}};
        case 3: return {{(u - 0.5) * sx, -hy, (v - 0.5) * sz}, {0, -1, 0}};
        case 4: return {{(u - 0.5) * sx, (v - 0.5) * sy, hz}, {0, 0, 1}};
        default: return {{(u - 0.5) * sx, (v - 0.5) * sy, -hz}, {0, 0, -1}};
      }
    }
  }
  throw GeomaeError("unknown shape kind");
}

}  // namespace

void ShapeSpec::validate() const {
  if (extent.size() != extent_arity(kind)) throw ConfigError("wrong extent arity for shape");
  for (double e : extent)
    if (!(e >= 0.0) || !std::isfinite(e)) throw ConfigError("negative or non-finite extent");
  if (!(density > 0.0)) throw ConfigError("density must be positive");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  if (pose.rotation.orthonormality_defect() > 1e-9)
    throw ConfigError("rotation is not orthonormal");
  if (surface_area() <= 0.0) throw GeomaeError("empty shape");
}

double ShapeSpec::surface_area() const {
  switch (kind) {
    case ShapeKind::plane: return extent[0] * extent[1];
    case ShapeKind::sphere: return 4.0 * M_PI * extent[0] * extent[0];
    case ShapeKind::box:
      return 2.0 * (extent[0] * extent[1] + extent[1] * extent[2] + extent[2] * extent[0]);
  }
  return 0.0;
}

PointCloud sample_shape(const ShapeSpec& spec, uint64_t seed) {
  spec.validate();
  const int64_t n = round_half_even(spec.density * spec.surface_area());
  XorShift64Star rng(seed);
  PointCloud cloud;
  cloud.xyz.reserve(3 * static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const SurfaceSample s = sample_local(spec, rng);
    const double g = rng.normal();
    const Vec3 local = s.p + s.n * (g * spec.noise_sigma);
    const Vec3 world = spec.pose.rotation.apply(local) + spec.pose.translation;
    cloud.push(static_cast<float>(world.x), static_cast<float>(world.y),
               static_cast<float>(world.z));
  }
  return cloud;
}

Vec3 analytic_normal(const ShapeSpec& spec, const Vec3& p) {
  spec.validate();
  const Vec3 q = spec.pose.rotation.apply_transposed(p - spec.pose.translation);
  const double tol = 4.0 * spec.noise_sigma + 1e-9;
  Vec3 n_local;
  double dist;
  switch (spec.kind) {
    case ShapeKind::plane: {
      dist = std::abs(q.z);
      n_local = {0, 0, 1};
      break;
    }
    case ShapeKind::sphere: {
      const double r = q.norm();
      if (r == 0.0) throw GeomaeError("off-surface query");
      dist = std::abs(r - spec.extent[0]);
      n_local = q * (1.0 / r);
      break;
    }
    case ShapeKind::box: {
      const Vec3 half{spec.extent[0] / 2, spec.extent[1] / 2, spec.extent[2] / 2};
      const Vec3 a{std::abs(q.x), std::abs(q.y), std::abs(q.z)};
      // nearest face is the axis with the largest overshoot (or smallest margin)
      int axis = 0;
      double best = a.x - half.x;
      if (a.y - half.y > best) { best = a.y - half.y; axis = 1; }
      if (a.z - half.z > best) { best = a.z - half.z; axis = 2; }
      if (best > 0.0) {
        const Vec3 clamped{std::clamp(q.x, -half.x, half.x), std::clamp(q.y, -half.y, half.y),
                           std::clamp(q.z, -half.z, half.z)};
        dist = (q - clamped).norm();
      } else {
        dist = -best;
      }
      n_local = {0, 0, 0};
      const double sign = (axis == 0 ? q.x : axis == 1 ? q.y : q.z) >= 0.0 ? 1.0 : -1.0;
      if (axis == 0) n_local.x = sign;
      if (axis == 1) n_local.y = sign;
      if (axis == 2) n_local.z = sign;
      break;
    }
    default: throw GeomaeError("unknown shape kind");
  }
  if (dist > tol) throw GeomaeError("off-surface query");
  return canonicalize_normal(spec.pose.rotation.apply(n_local));
}

PointCloud compose_scene(const SceneSpec& spec) {
  if (spec.shapes.empty()) throw GeomaeError("empty scene: no shapes");
  PointCloud out;
  for (size_t i = 0; i < spec.shapes.size(); ++i) {
    const uint64_t shape_seed = derive_seed(spec.seed, i);
    const PointCloud sampled = sample_shape(spec.shapes[i], shape_seed);
    for (size_t j = 0; j < sampled.count(); ++j) {
      if (spec.bounds.contains(sampled.point(j)))
        out.push(sampled.xyz[3 * j], sampled.xyz[3 * j + 1], sampled.xyz[3 * j + 2]);
    }
  }
  return out;
}

namespace {

using nlohmann::json;

Vec3 parse_vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw IoError("expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

ShapeKind parse_kind(const std::string& s) {
  if (s == "plane") return ShapeKind::plane;
  if (s == "sphere") return ShapeKind::sphere;
  if (s == "box") return ShapeKind::box;
  throw IoError("unknown shape kind: " + s);
}

const char* kind_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::plane: return "plane";
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::box: return "box";
  }
  return "?";
}

}  // namespace

SceneSpec parse_scene_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("scene spec parse error: ") + e.what());
  }
  try {
    SceneSpec spec;
    spec.seed = j.at("seed").get<uint64_t>();
    spec.bounds.min = parse_vec3(j.at("bounds").at("min"));
    spec.bounds.max = parse_vec3(j.at("bounds").at("max"));
    for (const auto& js : j.at("shapes")) {
      ShapeSpec s;
      s.kind = parse_kind(js.at("kind").get<std::string>());
      if (js.contains("pose")) {
        const auto& jp = js.at("pose");
        if (jp.contains("translation")) s.pose.translation = parse_vec3(jp.at("translation"));
        if (jp.contains("rotation")) {
          const auto& jr = jp.at("rotation");
          if (!jr.is_array() || jr.size() != 3) throw IoError("rotation must be 3 rows");
          for (int r = 0; r < 3; ++r) {
            const Vec3 row = parse_vec3(jr[r]);
            s.pose.rotation.m[3 * r] = row.x;
            s.pose.rotation.m[3 * r + 1] = row.y;
            s.pose.rotation.m[3 * r + 2] = row.z;
          }
        }
      }
      for (const auto& e : js.at("extent")) s.extent.push_back(e.get<double>());
      s.density = js.at("density").get<double>();
      s.noise_sigma = js.value("noise_sigma", 0.0);
      spec.shapes.push_back(std::move(s));
    }
    return spec;
  } catch (const json::exception& e) {
    throw IoError(std::string("scene spec field error: ") + e.what());
  }
}

SceneSpec load_scene_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene spec: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene_spec(ss.str());
}

std::string scene_spec_to_json(const SceneSpec& spec) {
  json j;
  j["seed"] = spec.seed;
  j["bounds"] = {{"min", {spec.bounds.min.x, spec.bounds.min.y, spec.bounds.min.z}},
                 {"max", {spec.bounds.max.x, spec.bounds.max.y, spec.bounds.max.z}}};
  j["shapes"] = json::array();
  for (const auto& s : spec.shapes) {
    json js;
    js["kind"] = kind_name(s.kind);
    js["pose"] = {
        {"translation", {s.pose.translation.x, s.pose.translation.y, s.pose.translation.z}},
        {"rotation",
         {{s.pose.rotation.m[0], s.pose.rotation.m[1], s.pose.rotation.m[2]},
          {s.pose.rotation.m[3], s.pose.rotation.m[4], s.pose.rotation.m[5]},
          {s.pose.rotation.m[6], s.pose.rotation.m[7], s.pose.rotation.m[8]}}}};
    js["extent"] = s.extent;
    js["density"] = s.density;
    js["noise_sigma"] = s.noise_sigma;
    j["shapes"].push_back(js);
  }
  return j.dump(2);
}

}  // namespace geomae
