#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geomae/geometry.hpp"
#include "geomae/pointcloud.hpp"

namespace geomae {

enum class ShapeKind { plane, sphere, box };

struct Pose {
  Vec3 translation{};
  Mat3 rotation = Mat3::identity();
};

// One geometric primitive with an analytically known surface.
//   plane:  extent = (size_x, size_y); surface z=0 in local frame
//   sphere: extent = (radius)
//   box:    extent = (size_x, size_y, size_z); surface of the full shell
// density is points per square meter; noise_sigma displaces each sample
// along the local surface normal.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::plane;
  Pose pose;
  std::vector<double> extent;
  double density = 0.0;
  double noise_sigma = 0.0;

  void validate() const;  // throws ConfigError / GeomaeError("empty shape")
  double surface_area() const;
};

struct Aabb {
  Vec3 min, max;
  bool contains(const Vec3& p) const {
    return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
           p.z <= max.z;
  }
};

struct SceneSpec {
  std::vector<ShapeSpec> shapes;
  uint64_t seed = 0;
  Aabb bounds;
};

// Samples round(density * area) surface points, each displaced along the
// local normal by a Gaussian of std noise_sigma. Pure function of (spec, seed).
PointCloud sample_shape(const ShapeSpec& spec, uint64_t seed);

// Exact surface normal at the surface point nearest to p, canonicalized by
// the sign rule of canonicalize_normal. Errors when p is farther than
// 4*noise_sigma (plus a small slack) from the surface.
Vec3 analytic_normal(const ShapeSpec& spec, const Vec3& p);

// Concatenates per-shape samples (shape i uses the (i+1)-th SplitMix64 output
// of the scene seed) and drops points outside bounds.
PointCloud compose_scene(const SceneSpec& spec);

// JSON (de)serialization; field names match the struct members.
SceneSpec parse_scene_spec(const std::string& json_text);
SceneSpec load_scene_spec(const std::string& path);
std::string scene_spec_to_json(const SceneSpec& spec);

}  // namespace geomae
