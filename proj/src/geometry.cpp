#include "keymatch3d/geometry.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace keymatch3d {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy))
    throw std::domain_error("intrinsics: focal lengths must be positive");
  if (width < 1 || height < 1) throw std::domain_error("intrinsics: image size must be >= 1");
  if (!std::isfinite(cx) || !std::isfinite(cy))
    throw std::domain_error("intrinsics: principal point must be finite");
}

bool CameraIntrinsics::contains(const Point2& u) const {
  return u.x() >= -0.5 && u.y() >= -0.5 && u.x() < width - 0.5 && u.y() < height - 0.5;
}

RigidTransform::RigidTransform(const Mat3& rotation, const Point3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite())
    throw std::domain_error("rigid transform: non-finite entries");
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9 || std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw std::domain_error("rigid transform: rotation is not orthonormal with det +1");
}

Point2 project(const CameraIntrinsics& intrinsics, const Point3& p) {
  if (!(p.z() > 0.0)) throw std::domain_error("project: point must have positive depth");
  return {intrinsics.fx * (p.x() / p.z()) + intrinsics.cx,
          intrinsics.fy * (p.y() / p.z()) + intrinsics.cy};
}

Point3 backproject(const CameraIntrinsics& intrinsics, const Point2& u, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth))
    throw std::domain_error("backproject: depth must be positive");
  return {(u.x() - intrinsics.cx) / intrinsics.fx * depth,
          (u.y() - intrinsics.cy) / intrinsics.fy * depth, depth};
}

Point3 transform_point(const RigidTransform& g, const Point3& p) { return g(p); }

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return RigidTransform(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
}

RigidTransform invert(const RigidTransform& g) {
  const Mat3 rt = g.rotation().transpose();
  return RigidTransform(rt, -(rt * g.translation()));
}

double rotation_angle(const RigidTransform& g) {
  return Eigen::AngleAxisd(g.rotation()).angle();
}

RigidTransform sample_perturbation(std::mt19937_64& rng, double max_angle, double max_translation) {
  if (max_angle < 0.0 || max_translation < 0.0)
    throw std::domain_error("sample_perturbation: bounds must be >= 0");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto random_direction = [&] {
    Point3 d;
    do {
      d = Point3(gauss(rng), gauss(rng), gauss(rng));
    } while (d.norm() < 1e-12);
    return Point3(d.normalized());
  };
  const Point3 axis = random_direction();
  const double angle = unit(rng) * max_angle;
  const Point3 dir = random_direction();
  const double norm = unit(rng) * max_translation;
  if (angle == 0.0 && norm == 0.0) return RigidTransform::identity();
  return RigidTransform(Eigen::AngleAxisd(angle, axis).toRotationMatrix(), dir * norm);
}

std::string format_pose(const RigidTransform& g) {
  std::string out;
  char buf[40];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      const double v = c < 3 ? g.rotation()(r, c) : g.translation()(r);
      std::snprintf(buf, sizeof buf, "%.17g", v);
      if (!out.empty()) out += ' ';
      out += buf;
    }
  }
  return out;
}

RigidTransform parse_pose(const std::string& line) {
  std::istringstream is(line);
  double v[12];
  for (double& x : v) {
    std::string tok;
    if (!(is >> tok)) throw std::runtime_error("pose: expected 12 values in line '" + line + "'");
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
      throw std::runtime_error("pose: bad number '" + tok + "'");
  }
  std::string extra;
  if (is >> extra) throw std::runtime_error("pose: more than 12 values in line '" + line + "'");
  Mat3 r;
  Point3 t;
  for (int i = 0; i < 3; ++i) {
    r(i, 0) = v[4 * i];
    r(i, 1) = v[4 * i + 1];
    r(i, 2) = v[4 * i + 2];
    t(i) = v[4 * i + 3];
  }
  return RigidTransform(r, t);
}

void write_poses(std::ostream& os, const std::vector<RigidTransform>& poses) {
  for (const auto& g : poses) os << format_pose(g) << '\n';
}

std::vector<RigidTransform> read_poses(std::istream& is) {
  std::vector<RigidTransform> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_pose(line));
  }
  return out;
}

}  // namespace keymatch3d
