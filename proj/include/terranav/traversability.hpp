#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "terranav/geometry.hpp"
#include "terranav/robot_model.hpp"
#include "terranav/segmentation.hpp"
#include "terranav/settling.hpp"

namespace terranav {

enum CellFlags : std::uint8_t {
  kFlagNone = 0,
  kFlagTipOver = 1u << 0,
  kFlagPositiveObstacle = 1u << 1,
  kFlagNegativeObstacle = 1u << 2,
  kFlagNoSupport = 1u << 3,
};

enum class CellKind : std::uint8_t { Free, Lethal, Unknown };

/// Per-cell traversability verdict. `kind == Lethal` iff any flag is set;
/// `kind == Unknown` iff settling failed and no flag was forced; otherwise a
/// soft cost in [0, 1] derived from the slope. Ideal flat dense ground has
/// cost 0.
struct CellAssessment {
  CellKind kind = CellKind::Unknown;
  double cost = 0.0;
  double slope_angle = 0.0;      // rad
  int colliding_points = 0;
  double ground_density = 0.0;   // points / m^2
  std::uint8_t flags = kFlagNone;

  bool lethal() const { return kind == CellKind::Lethal; }
  bool unknown() const { return kind == CellKind::Unknown; }

  static CellAssessment unknown_cell() { return CellAssessment{}; }
};

/// Tip-over stability: slope angle between the surface normal and gravity,
/// stable iff it stays within the robot's limit (equality is safe).
inline std::pair<double, bool> check_tipover(const Eigen::Vector3d& normal,
                                             double max_slope) {
  const double slope = std::acos(std::clamp(normal.z() / normal.norm(), -1.0, 1.0));
  return {slope, slope <= max_slope};
}

/// Positive obstacles: counts obstacle points inside the collision box
/// implied by the settled pose. The box spans the footprint in x/y; its
/// bottom face sits ground_clearance + collision_margin above the settled
/// plane and its top at body_height. Blocked iff strictly more than
/// collision_point_threshold points collide.
///
/// Throws NotSettledError on a non-settled input; callers map that to UNKNOWN.
inline std::pair<int, bool> check_positive_obstacle(const SettledPose& settled,
                                                    const PointCloud& obstacles,
                                                    const RobotModel& model,
                                                    const FidelityLevel& fidelity) {
  if (settled.status != SettleStatus::Settled) {
    throw NotSettledError("check_positive_obstacle: pose is not settled");
  }
  const double z_lo = model.ground_clearance + fidelity.collision_margin;
  const double z_hi = model.body_height;
  if (z_lo >= z_hi) return {0, false};  // margin swallows the whole box

  const Eigen::Matrix3d rt = rotation_matrix(settled.pose).transpose();
  const Eigen::Vector3d t = translation(settled.pose);
  const double hl = 0.5 * model.footprint_length;
  const double hw = 0.5 * model.footprint_width;
  int count = 0;
  for (const Point3& p : obstacles.points) {
    const Eigen::Vector3d u = rt * (to_eigen(p) - t);
    if (std::abs(u.x()) <= hl && std::abs(u.y()) <= hw && u.z() >= z_lo &&
        u.z() <= z_hi) {
      ++count;
    }
  }
  return {count, count > model.collision_point_threshold};
}

/// Negative obstacles: when the negative space is occluded the only evidence
/// is missing ground; too few ground returns under the footprint means worst
/// case. Hazardous iff density < min_ground_density (equality is safe).
inline std::pair<double, bool> check_negative_obstacle(
    const std::vector<Point3>& ground_in_footprint, double footprint_area,
    const RobotModel& model) {
  const double density =
      static_cast<double>(ground_in_footprint.size()) / footprint_area;
  return {density, density < model.min_ground_density};
}

namespace detail {

/// Uniform-bucket index over a cloud's (x, y) for fast footprint crops.
/// Membership is decided by the same oriented-rectangle test as
/// crop_footprint; the buckets only prune candidates.
class CloudIndex {
 public:
  explicit CloudIndex(const PointCloud& cloud, double bucket = 1.0)
      : cloud_(cloud), bucket_(bucket) {
    if (cloud.empty()) return;
    min_x_ = max_x_ = cloud.points[0].x;
    min_y_ = max_y_ = cloud.points[0].y;
    for (const Point3& p : cloud.points) {
      min_x_ = std::min(min_x_, p.x);
      max_x_ = std::max(max_x_, p.x);
      min_y_ = std::min(min_y_, p.y);
      max_y_ = std::max(max_y_, p.y);
    }
    nx_ = static_cast<int>(std::floor((max_x_ - min_x_) / bucket_)) + 1;
    ny_ = static_cast<int>(std::floor((max_y_ - min_y_) / bucket_)) + 1;
    buckets_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (std::size_t k = 0; k < cloud.points.size(); ++k) {
      buckets_[bucket_of(cloud.points[k].x, cloud.points[k].y)].push_back(k);
    }
  }

  /// Points inside the yaw-oriented rectangle, in input-cloud order.
  void crop(const PoseSE2& query, double length, double width,
            std::vector<Point3>& out) const {
    out.clear();
    if (cloud_.empty()) return;
    const double c = std::cos(query.yaw);
    const double s = std::sin(query.yaw);
    const double hl = 0.5 * length;
    const double hw = 0.5 * width;
    // AABB of the oriented rectangle.
    const double rx = std::abs(c) * hl + std::abs(s) * hw;
    const double ry = std::abs(s) * hl + std::abs(c) * hw;
    const int i0 = clamp_i(static_cast<int>(std::floor((query.x - rx - min_x_) / bucket_)), nx_);
    const int i1 = clamp_i(static_cast<int>(std::floor((query.x + rx - min_x_) / bucket_)), nx_);
    const int j0 = clamp_i(static_cast<int>(std::floor((query.y - ry - min_y_) / bucket_)), ny_);
    const int j1 = clamp_i(static_cast<int>(std::floor((query.y + ry - min_y_) / bucket_)), ny_);
    scratch_.clear();
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) {
        for (std::size_t k : buckets_[static_cast<std::size_t>(j) * nx_ + i]) {
          const Point3& p = cloud_.points[k];
          const double dx = p.x - query.x;
          const double dy = p.y - query.y;
          const double u = c * dx + s * dy;
          const double v = -s * dx + c * dy;
          if (std::abs(u) <= hl && std::abs(v) <= hw) scratch_.push_back(k);
        }
      }
    }
    std::sort(scratch_.begin(), scratch_.end());
    out.reserve(scratch_.size());
    for (std::size_t k : scratch_) out.push_back(cloud_.points[k]);
  }

  const PointCloud& cloud() const { return cloud_; }

 private:
  static int clamp_i(int v, int n) { return std::clamp(v, 0, n - 1); }

  std::size_t bucket_of(double x, double y) const {
    const int i = clamp_i(static_cast<int>(std::floor((x - min_x_) / bucket_)), nx_);
    const int j = clamp_i(static_cast<int>(std::floor((y - min_y_) / bucket_)), ny_);
    return static_cast<std::size_t>(j) * nx_ + i;
  }

  const PointCloud& cloud_;
  double bucket_;
  double min_x_ = 0.0, max_x_ = 0.0, min_y_ = 0.0, max_y_ = 0.0;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<std::size_t>> buckets_;
  mutable std::vector<std::size_t> scratch_;
};

}  // namespace detail

/// Precomputed view over a segmented cloud used by cell assessment.
struct AssessmentContext {
  explicit AssessmentContext(const SegmentedCloud& segmented)
      : ground_index(segmented.ground), obstacle_index(segmented.obstacle) {}

  detail::CloudIndex ground_index;
  detail::CloudIndex obstacle_index;
  mutable std::vector<Point3> ground_scratch;
  mutable std::vector<Point3> surround_scratch;
  mutable std::vector<Point3> obstacle_scratch;
};

/// Evaluates the three traversability metrics at one query pose and combines
/// them: any failed check makes the cell LETHAL; otherwise the soft cost is
/// the slope angle normalized by the tip-over limit.
///
/// A cell that cannot be settled is LETHAL (negative obstacle, no support)
/// when ground evidence exists around the footprint but not under it, and
/// UNKNOWN when the area is simply unobserved.
inline CellAssessment assess_cell(const PoseSE2& query,
                                  const AssessmentContext& ctx,
                                  const RobotModel& model,
                                  const FidelityLevel& fidelity) {
  CellAssessment out;
  ctx.ground_index.crop(query, model.footprint_length, model.footprint_width,
                        ctx.ground_scratch);
  const auto [density, sparse] =
      check_negative_obstacle(ctx.ground_scratch, model.footprint_area(), model);
  out.ground_density = density;

  const SettledPose settled =
      settle_from_points(query, ctx.ground_scratch, model.min_support_points);

  if (settled.status == SettleStatus::InsufficientSupport) {
    if (sparse) {
      // Distinguish a hole rimmed by evidence from a merely unobserved area:
      // require enough ground points around the footprint to have expected
      // returns under it.
      ctx.ground_index.crop(query, 2.0 * model.footprint_length,
                            2.0 * model.footprint_width, ctx.surround_scratch);
      if (static_cast<int>(ctx.surround_scratch.size()) >= model.min_support_points) {
        out.flags = kFlagNegativeObstacle | kFlagNoSupport;
        out.kind = CellKind::Lethal;
        return out;
      }
    }
    out.kind = CellKind::Unknown;
    return out;
  }
  if (settled.status == SettleStatus::Degenerate) {
    out.kind = CellKind::Unknown;
    return out;
  }

  const auto [slope, stable] = check_tipover(settled.normal, model.max_slope);
  out.slope_angle = slope;
  if (!stable) out.flags |= kFlagTipOver;

  ctx.obstacle_index.crop(query, 3.0 * model.footprint_length,
                          3.0 * model.footprint_width, ctx.obstacle_scratch);
  PointCloud nearby_obstacles;
  nearby_obstacles.points = std::move(ctx.obstacle_scratch);
  const auto [colliding, blocked] =
      check_positive_obstacle(settled, nearby_obstacles, model, fidelity);
  ctx.obstacle_scratch = std::move(nearby_obstacles.points);
  out.colliding_points = colliding;
  if (blocked) out.flags |= kFlagPositiveObstacle;

  if (sparse) out.flags |= kFlagNegativeObstacle;

  if (out.flags != kFlagNone) {
    out.kind = CellKind::Lethal;
    return out;
  }
  out.kind = CellKind::Free;
  out.cost = std::clamp(slope / model.max_slope, 0.0, 1.0);
  return out;
}

/// Convenience overload building its own context (one-off queries).
inline CellAssessment assess_cell(const PoseSE2& query,
                                  const SegmentedCloud& segmented,
                                  const RobotModel& model,
                                  const FidelityLevel& fidelity) {
  return assess_cell(query, AssessmentContext(segmented), model, fidelity);
}

/// Order used to aggregate per-yaw assessments into one cell: LETHAL beats
/// UNKNOWN beats higher free cost; flags are unioned.
inline CellAssessment worst_of(const CellAssessment& a, const CellAssessment& b) {
  CellAssessment out = a;
  const auto rank = [](const CellAssessment& c) {
    if (c.kind == CellKind::Lethal) return 2;
    if (c.kind == CellKind::Unknown) return 1;
    return 0;
  };
  if (rank(b) > rank(a) || (rank(b) == rank(a) && b.cost > a.cost)) {
    out = b;
  }
  out.flags = a.flags | b.flags;
  if (out.flags != kFlagNone) out.kind = CellKind::Lethal;
  out.slope_angle = std::max(a.slope_angle, b.slope_angle);
  out.colliding_points = std::max(a.colliding_points, b.colliding_points);
  out.ground_density = std::min(a.ground_density, b.ground_density);
  return out;
}

/// Builds a costmap layer by assessing every cell center at `yaw_samples`
/// evenly spaced yaws in [0, pi) (the footprint is symmetric under a half
/// turn) and storing the worst result per cell. Pure function: identical
/// inputs produce identical grids.
inline Grid2D<CellAssessment> build_costmap(const SegmentedCloud& segmented,
                                            const PoseSE2& center,
                                            double range, double resolution,
                                            int yaw_samples,
                                            const RobotModel& model,
                                            const FidelityLevel& fidelity) {
  // Odd cell count keeps the center pose exactly on a cell center.
  const int half_cells = static_cast<int>(std::ceil(range / resolution));
  const int cells = 2 * half_cells + 1;
  Grid2D<CellAssessment> grid(center.x - (half_cells + 0.5) * resolution,
                              center.y - (half_cells + 0.5) * resolution,
                              resolution, cells, cells);
  const AssessmentContext ctx(segmented);
  for (int j = 0; j < cells; ++j) {
    for (int i = 0; i < cells; ++i) {
      const auto [cx, cy] = grid.grid_to_world({i, j});
      CellAssessment acc;
      for (int k = 0; k < yaw_samples; ++k) {
        const double yaw = normalize_angle(center.yaw + k * kPi / yaw_samples);
        const CellAssessment a = assess_cell({cx, cy, yaw}, ctx, model, fidelity);
        acc = (k == 0) ? a : worst_of(acc, a);
      }
      grid.at(i, j) = acc;
    }
  }
  return grid;
}

}  // namespace terranav
