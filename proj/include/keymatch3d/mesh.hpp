#pragma once

#include "keymatch3d/geometry.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace keymatch3d {

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<int, 3>> triangles;

  /// Throws std::domain_error on out-of-range indices, no triangles or
  /// non-finite vertices.
  void validate() const;

  Point3 centroid() const;  // mean of referenced vertices
  double bounding_radius(const Point3& center) const;

  void add_box(const Point3& center, const Point3& half_extent, const Mat3& rotation = Mat3::Identity());
  /// Closed cylinder along `axis` (unit), base centered at `base`.
  void add_cylinder(const Point3& base, const Point3& axis, double radius, double length, int segments);
};

/// Minimal Wavefront OBJ: `v x y z` and `f a b c [d ...]` (fans), 1-based,
/// `a/b/c` index forms accepted. Everything else is ignored.
TriangleMesh load_obj(const std::filesystem::path& path);
void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Low-poly machine-part stand-in (a block with bosses, a pipe and
/// brackets), about 0.3 m bounding radius, a few hundred triangles.
TriangleMesh make_engine_mesh();

/// Resolves `builtin:engine` or an OBJ path.
TriangleMesh load_mesh(const std::string& spec);

}  // namespace keymatch3d
