#include "keymatch3d/mesh.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace keymatch3d {

void TriangleMesh::validate() const {
  if (triangles.empty()) throw std::domain_error("mesh: no triangles");
  const int n = static_cast<int>(vertices.size());
  for (const auto& v : vertices)
    if (!v.allFinite()) throw std::domain_error("mesh: non-finite vertex");
  for (const auto& t : triangles)
    for (int i : t)
      if (i < 0 || i >= n) throw std::domain_error("mesh: triangle index out of range");
}

Point3 TriangleMesh::centroid() const {
  std::vector<char> used(vertices.size(), 0);
  for (const auto& t : triangles)
    for (int i : t) used[i] = 1;
  Point3 sum = Point3::Zero();
  int count = 0;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (!used[i]) continue;
    sum += vertices[i];
    ++count;
  }
  return count ? Point3(sum / count) : Point3::Zero();
}

double TriangleMesh::bounding_radius(const Point3& center) const {
  double r = 0.0;
  for (const auto& t : triangles)
    for (int i : t) r = std::max(r, (vertices[i] - center).norm());
  return r;
}

void TriangleMesh::add_box(const Point3& center, const Point3& half, const Mat3& rotation) {
  const int base = static_cast<int>(vertices.size());
  for (int i = 0; i < 8; ++i) {
    const Point3 corner((i & 1) ? half.x() : -half.x(), (i & 2) ? half.y() : -half.y(),
                        (i & 4) ? half.z() : -half.z());
    vertices.push_back(center + rotation * corner);
  }
  // Outward-facing quads as index quadruples into the corner numbering above.
  static constexpr int kFaces[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                                       {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& f : kFaces) {
    triangles.push_back({base + f[0], base + f[1], base + f[2]});
    triangles.push_back({base + f[0], base + f[2], base + f[3]});
  }
}

void TriangleMesh::add_cylinder(const Point3& base_center, const Point3& axis, double radius,
                                double length, int segments) {
  const Point3 a = axis.normalized();
  Point3 u = a.unitOrthogonal();
  Point3 w = a.cross(u);
  const int base = static_cast<int>(vertices.size());
  for (int s = 0; s < segments; ++s) {
    const double phi = 2.0 * std::numbers::pi * s / segments;
    const Point3 rim = base_center + radius * (std::cos(phi) * u + std::sin(phi) * w);
    vertices.push_back(rim);
    vertices.push_back(rim + length * a);
  }
  const int bottom = static_cast<int>(vertices.size());
  vertices.push_back(base_center);
  vertices.push_back(base_center + length * a);
  for (int s = 0; s < segments; ++s) {
    const int i0 = base + 2 * s, i1 = base + 2 * ((s + 1) % segments);
    triangles.push_back({i0, i1, i1 + 1});
    triangles.push_back({i0, i1 + 1, i0 + 1});
    triangles.push_back({bottom, i1, i0});
    triangles.push_back({bottom + 1, i0 + 1, i1 + 1});
  }
}

TriangleMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mesh file " + path.string());
  TriangleMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream is(line);
    std::string tag;
    if (!(is >> tag)) continue;
    if (tag == "v") {
      Point3 p;
      if (!(is >> p.x() >> p.y() >> p.z()))
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad vertex");
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (is >> tok) {
        const int i = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(i > 0 ? i - 1 : static_cast<int>(mesh.vertices.size()) + i);
      }
      if (idx.size() < 3)
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": face needs 3 indices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  mesh.validate();
  return mesh;
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write mesh file " + path.string());
  out.precision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

TriangleMesh make_engine_mesh() {
  TriangleMesh m;
  const Point3 ex = Point3::UnitX(), ey = Point3::UnitY(), ez = Point3::UnitZ();
  // main block
  m.add_box({0, 0, 0}, {0.18, 0.10, 0.12});
  // cylinder head bosses on top
  for (int i = 0; i < 3; ++i) m.add_cylinder({-0.11 + 0.11 * i, 0.10, 0.0}, ey, 0.04, 0.07, 12);
  // intake pipe bent along x then z
  m.add_cylinder({0.18, 0.03, 0.05}, ex, 0.025, 0.09, 10);
  m.add_cylinder({0.27, 0.03, 0.05}, ez, 0.025, 0.10, 10);
  // mounting brackets
  m.add_box({-0.21, -0.07, 0.08}, {0.03, 0.03, 0.02});
  m.add_box({-0.21, -0.07, -0.08}, {0.03, 0.03, 0.02});
  // pulley on the front face
  m.add_cylinder({0.0, -0.02, 0.12}, ez, 0.06, 0.03, 16);
  // oil pan, slightly rotated
  const Mat3 tilt = Eigen::AngleAxisd(0.15, ex).toRotationMatrix();
  m.add_box({0.02, -0.14, 0.0}, {0.12, 0.04, 0.09}, tilt);
  // side fins
  for (int i = 0; i < 4; ++i) m.add_box({-0.09 + 0.06 * i, 0.02, -0.135}, {0.01, 0.06, 0.015});
  return m;
}

TriangleMesh load_mesh(const std::string& spec) {
  if (spec == "builtin:engine") return make_engine_mesh();
  if (spec.rfind("builtin:", 0) == 0) throw std::runtime_error("unknown builtin mesh '" + spec + "'");
  return load_obj(spec);
}

}  // namespace keymatch3d
