#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "geomae/geometry.hpp"

namespace geomae {

// Flat array of 3D points in meters, optionally with per-point intensity.
// Coordinates are stored as f32; all math downstream promotes to f64.
struct PointCloud {
  std::vector<float> xyz;        // 3 * count, interleaved x,y,z
  std::vector<float> intensity;  // empty or count entries

  size_t count() const { return xyz.size() / 3; }
  bool has_intensity() const { return !intensity.empty(); }

  Vec3 point(size_t i) const {
    return {static_cast<double>(xyz[3 * i]), static_cast<double>(xyz[3 * i + 1]),
            static_cast<double>(xyz[3 * i + 2])};
  }

  void push(float x, float y, float z) {
    xyz.push_back(x);
    xyz.push_back(y);
    xyz.push_back(z);
  }
};

}  // namespace geomae
