#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "terranav/errors.hpp"

namespace terranav {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Wraps an angle to (-pi, pi]. Exactly -pi maps to +pi.
inline double normalize_angle(double a) {
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r <= 0.0) r += 2.0 * kPi;
  return r - kPi;
}

/// A point in a named right-handed frame, z up, meters.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

inline Eigen::Vector3d to_eigen(const Point3& p) { return {p.x, p.y, p.z}; }
inline Point3 from_eigen(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

/// Planar pose; yaw is kept normalized to (-pi, pi].
struct PoseSE2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  static PoseSE2 make(double x, double y, double yaw) {
    return {x, y, normalize_angle(yaw)};
  }
};

/// Full 6-DoF pose. Rotation is Z-Y-X intrinsic: R = Rz(yaw)*Ry(pitch)*Rx(roll).
struct PoseSE3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;

  PoseSE2 se2() const { return {x, y, yaw}; }
};

/// Rotation matrix for the Z-Y-X intrinsic Euler convention.
inline Eigen::Matrix3d rotation_matrix(double roll, double pitch, double yaw) {
  return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

inline Eigen::Matrix3d rotation_matrix(const PoseSE3& p) {
  return rotation_matrix(p.roll, p.pitch, p.yaw);
}

inline Eigen::Vector3d translation(const PoseSE3& p) { return {p.x, p.y, p.z}; }

/// Applies pose to a point: rotate, then translate.
inline Point3 transform_point(const PoseSE3& pose, const Point3& p) {
  return from_eigen(rotation_matrix(pose) * to_eigen(p) + translation(pose));
}

inline PoseSE3 inverse(const PoseSE3& pose) {
  const Eigen::Matrix3d rt = rotation_matrix(pose).transpose();
  const Eigen::Vector3d t = -(rt * translation(pose));
  // Recover Z-Y-X angles from the transposed rotation.
  const double pitch = std::asin(std::clamp(-rt(2, 0), -1.0, 1.0));
  const double roll = std::atan2(rt(2, 1), rt(2, 2));
  const double yaw = std::atan2(rt(1, 0), rt(0, 0));
  return {t.x(), t.y(), t.z(), roll, pitch, yaw};
}

/// Composition: (a then b)(p) = b(a(p)).
inline PoseSE3 compose(const PoseSE3& b, const PoseSE3& a) {
  const Eigen::Matrix3d r = rotation_matrix(b) * rotation_matrix(a);
  const Eigen::Vector3d t = rotation_matrix(b) * translation(a) + translation(b);
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {t.x(), t.y(), t.z(), roll, pitch, yaw};
}

/// An ordered set of points in one frame, stamped with monotonic sim time.
struct PointCloud {
  std::vector<Point3> points;
  std::string frame_id = "map";
  double stamp = 0.0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Rigidly transforms every point of `cloud` by `pose` and relabels the frame.
/// Point order and count are preserved.
inline PointCloud transform_cloud(const PointCloud& cloud, const PoseSE3& pose,
                                  const std::string& target_frame) {
  PointCloud out;
  out.frame_id = target_frame;
  out.stamp = cloud.stamp;
  out.points.reserve(cloud.points.size());
  const Eigen::Matrix3d r = rotation_matrix(pose);
  const Eigen::Vector3d t = translation(pose);
  for (const Point3& p : cloud.points) {
    out.points.push_back(from_eigen(r * to_eigen(p) + t));
  }
  return out;
}

/// Orthogonal least-squares plane n.p = offset with ||n|| = 1 and n.z > 0.
struct PlaneFit {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;         // plane is normal . p = offset
  double rmse = 0.0;           // root-mean-square orthogonal residual
  std::size_t support_count = 0;

  double height_at(double x, double y) const {
    return (offset - normal.x() * x - normal.y() * y) / normal.z();
  }
};

/// Fits a plane minimizing the sum of squared orthogonal distances, via the
/// eigen-decomposition of the centered covariance. The normal is the
/// eigenvector of the smallest eigenvalue, flipped so normal.z > 0.
///
/// Throws DegenerateFitError when fewer than 3 points are given or when the
/// two smallest eigenvalues are separated by less than 1e-12 (collinear or
/// coincident input: the normal direction is not unique).
inline PlaneFit fit_plane(const std::vector<Point3>& points) {
  if (points.size() < 3) {
    throw DegenerateFitError("fit_plane: needs at least 3 points, got " +
                             std::to_string(points.size()));
  }
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const Point3& p : points) centroid += to_eigen(p);
  centroid /= static_cast<double>(points.size());

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Point3& p : points) {
    const Eigen::Vector3d d = to_eigen(p) - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d evals = eig.eigenvalues();  // ascending
  if (evals[1] - evals[0] < 1e-12) {
    throw DegenerateFitError("fit_plane: degenerate point set (eigenvalue gap " +
                             std::to_string(evals[1] - evals[0]) + ")");
  }

  Eigen::Vector3d normal = eig.eigenvectors().col(0);
  if (std::abs(normal.z()) < 1e-12) {
    throw DegenerateFitError("fit_plane: vertical plane, cannot orient normal up");
  }
  if (normal.z() < 0.0) normal = -normal;
  normal.normalize();

  PlaneFit fit;
  fit.normal = normal;
  fit.offset = normal.dot(centroid);
  fit.support_count = points.size();
  // Mean squared orthogonal residual is the smallest eigenvalue.
  fit.rmse = std::sqrt(std::max(0.0, evals[0]));
  return fit;
}

/// Returns the points whose (x, y) lies inside the yaw-oriented
/// length x width rectangle centered at the query pose. The z coordinate is
/// unrestricted; boundaries are closed. An empty result is a valid output.
inline std::vector<Point3> crop_footprint(const PointCloud& cloud,
                                          const PoseSE2& query, double length,
                                          double width) {
  const double c = std::cos(query.yaw);
  const double s = std::sin(query.yaw);
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  std::vector<Point3> out;
  for (const Point3& p : cloud.points) {
    const double dx = p.x - query.x;
    const double dy = p.y - query.y;
    const double u = c * dx + s * dy;
    const double v = -s * dx + c * dy;
    if (std::abs(u) <= hl && std::abs(v) <= hw) out.push_back(p);
  }
  return out;
}

struct GridIndex {
  int i = 0;  // column (x direction)
  int j = 0;  // row (y direction)

  friend bool operator==(const GridIndex&, const GridIndex&) = default;
};

/// Row-major 2D grid of cell payloads. `origin` is the world position of the
/// (0,0) cell corner; cells are half-open: cell k covers
/// [origin + k*res, origin + (k+1)*res).
template <typename Cell>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(double origin_x, double origin_y, double resolution, int width,
         int height, Cell fill = Cell{})
      : origin_x_(origin_x),
        origin_y_(origin_y),
        resolution_(resolution),
        width_(width),
        height_(height),
        cells_(static_cast<std::size_t>(width) * height, fill) {}

  double origin_x() const { return origin_x_; }
  double origin_y() const { return origin_y_; }
  double resolution() const { return resolution_; }
  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return cells_.size(); }

  bool in_bounds(const GridIndex& idx) const {
    return idx.i >= 0 && idx.i < width_ && idx.j >= 0 && idx.j < height_;
  }

  /// floor((p - origin) / resolution) per axis; out-of-bounds is a value.
  std::optional<GridIndex> world_to_grid(double x, double y) const {
    const double fi = std::floor((x - origin_x_) / resolution_);
    const double fj = std::floor((y - origin_y_) / resolution_);
    if (fi < 0.0 || fj < 0.0 || fi >= static_cast<double>(width_) ||
        fj >= static_cast<double>(height_)) {
      return std::nullopt;
    }
    return GridIndex{static_cast<int>(fi), static_cast<int>(fj)};
  }

  /// World coordinates of a cell center.
  std::pair<double, double> grid_to_world(const GridIndex& idx) const {
    return {origin_x_ + (idx.i + 0.5) * resolution_,
            origin_y_ + (idx.j + 0.5) * resolution_};
  }

  Cell& at(const GridIndex& idx) { return cells_[index_of(idx)]; }
  const Cell& at(const GridIndex& idx) const { return cells_[index_of(idx)]; }
  Cell& at(int i, int j) { return at(GridIndex{i, j}); }
  const Cell& at(int i, int j) const { return at(GridIndex{i, j}); }

  std::vector<Cell>& cells() { return cells_; }
  const std::vector<Cell>& cells() const { return cells_; }

  std::size_t index_of(const GridIndex& idx) const {
    return static_cast<std::size_t>(idx.j) * width_ + idx.i;
  }

 private:
  double origin_x_ = 0.0;
  double origin_y_ = 0.0;
  double resolution_ = 1.0;
  int width_ = 0;
  int height_ = 0;
  std::vector<Cell> cells_;
};

// ---------------------------------------------------------------------------
// ASCII point cloud format: one "x y z" triple per line, '#' comments,
// decimal meters. The reader rejects non-finite values.
// ---------------------------------------------------------------------------

inline void write_cloud(std::ostream& os, const PointCloud& cloud) {
  os << "# frame " << cloud.frame_id << "\n";
  os << "# stamp " << cloud.stamp << "\n";
  char buf[96];
  for (const Point3& p : cloud.points) {
    char* it = buf;
    auto emit = [&](double v, char sep) {
      it = std::to_chars(it, buf + sizeof(buf), v).ptr;
      *it++ = sep;
    };
    emit(p.x, ' ');
    emit(p.y, ' ');
    emit(p.z, '\n');
    os.write(buf, it - buf);
  }
}

inline PointCloud read_cloud(std::istream& is, const std::string& frame_id = "map") {
  PointCloud cloud;
  cloud.frame_id = frame_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    const char* it = line.data() + start;
    const char* end = line.data() + line.size();
    Point3 p;
    for (double* coord : {&p.x, &p.y, &p.z}) {
      while (it != end && (*it == ' ' || *it == '\t')) ++it;
      auto [next, ec] = std::from_chars(it, end, *coord);
      if (ec != std::errc{}) {
        throw Error("read_cloud: malformed coordinate at line " +
                    std::to_string(line_no));
      }
      it = next;
    }
    if (!p.finite()) {
      throw Error("read_cloud: non-finite point at line " + std::to_string(line_no));
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

}  // namespace terranav
