#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "terranav/geometry.hpp"
#include "terranav/robot_model.hpp"

namespace terranav {

enum class SettleStatus { Settled, InsufficientSupport, Degenerate };

inline const char* to_string(SettleStatus s) {
  switch (s) {
    case SettleStatus::Settled: return "settled";
    case SettleStatus::InsufficientSupport: return "insufficient_support";
    case SettleStatus::Degenerate: return "degenerate";
  }
  return "?";
}

/// Result of projecting a planar query onto the ground cloud: the full
/// SE(3) pose plus fit diagnostics. Only `status == Settled` results carry a
/// meaningful pose/normal.
struct SettledPose {
  PoseSE3 pose;
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  int support_count = 0;
  double fit_rmse = 0.0;
  SettleStatus status = SettleStatus::Degenerate;
};

/// Decomposes a surface normal into (roll, pitch) such that the Z-Y-X
/// rotation (yaw, pitch, roll) maps the body +z axis onto the normal. The
/// inverse map recovers the normal; roll and pitch land in (-pi/2, pi/2).
///
/// Sign convention: on terrain rising along +x, a query facing +x settles
/// with negative pitch (nose up).
///
/// Throws InvalidNormalError when normal.z <= 0.
inline std::pair<double, double> attitude_from_normal(const Eigen::Vector3d& normal,
                                                      double yaw) {
  if (!(normal.z() > 0.0)) {
    throw InvalidNormalError("attitude_from_normal: normal.z must be positive");
  }
  const Eigen::Vector3d n = normal.normalized();
  // De-rotate by yaw; the remainder is pitch-then-roll.
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double mx = c * n.x() + s * n.y();
  const double my = -s * n.x() + c * n.y();
  const double mz = n.z();
  const double roll = std::asin(std::clamp(-my, -1.0, 1.0));
  const double pitch = std::atan2(mx, mz);
  return {roll, pitch};
}

/// Body +z axis direction for the given attitude; inverse of
/// attitude_from_normal up to normalization.
inline Eigen::Vector3d normal_from_attitude(double roll, double pitch, double yaw) {
  return rotation_matrix(roll, pitch, yaw).col(2);
}

/// Settles a query against pre-cropped footprint points. `min_support` is
/// the support threshold to apply (callers may scale it per fidelity tier).
inline SettledPose settle_from_points(const PoseSE2& query,
                                      const std::vector<Point3>& footprint_points,
                                      int min_support) {
  SettledPose out;
  out.support_count = static_cast<int>(footprint_points.size());
  if (out.support_count < min_support) {
    out.status = SettleStatus::InsufficientSupport;
    return out;
  }
  PlaneFit fit;
  try {
    fit = fit_plane(footprint_points);
  } catch (const DegenerateFitError&) {
    out.status = SettleStatus::Degenerate;
    return out;
  }
  const auto [roll, pitch] = attitude_from_normal(fit.normal, query.yaw);
  out.pose = {query.x, query.y, fit.height_at(query.x, query.y),
              roll, pitch, query.yaw};
  out.normal = fit.normal;
  out.fit_rmse = fit.rmse;
  out.status = SettleStatus::Settled;
  return out;
}

/// Solves for the SE(3) pose of the robot given an SE(2) query pose: crops
/// the ground points under the footprint, fits a plane through them, takes z
/// from the plane at the query location and roll/pitch from the plane
/// normal. Yaw is held at the query yaw exactly. All failure modes are
/// encoded in the result status; planners treat non-Settled cells as
/// untraversable or unknown.
inline SettledPose settle(const PoseSE2& query, const PointCloud& ground,
                          const RobotModel& model, int min_support_override = -1) {
  const int min_support =
      min_support_override >= 0 ? min_support_override : model.min_support_points;
  const std::vector<Point3> pts = crop_footprint(
      ground, query, model.footprint_length, model.footprint_width);
  return settle_from_points(query, pts, min_support);
}

/// Experimental conservative variant for high-slope, low-contact terrain
/// (stairs): fits a sub-plane per footprint quadrant and reports the worst
/// attainable per-axis attitude over the quadrant fits instead of the
/// average attitude of a single fit. z is the highest quadrant plane at the
/// query location. Falls back to the standard settle when no quadrant has
/// enough support.
inline SettledPose settle_conservative(const PoseSE2& query,
                                       const PointCloud& ground,
                                       const RobotModel& model,
                                       int min_support_override = -1) {
  const int min_support =
      min_support_override >= 0 ? min_support_override : model.min_support_points;
  const std::vector<Point3> pts = crop_footprint(
      ground, query, model.footprint_length, model.footprint_width);
  if (static_cast<int>(pts.size()) < min_support) {
    SettledPose out;
    out.support_count = static_cast<int>(pts.size());
    out.status = SettleStatus::InsufficientSupport;
    return out;
  }

  const int quad_support = std::max(3, min_support / 4);
  const double ql = 0.5 * model.footprint_length;
  const double qw = 0.5 * model.footprint_width;
  const double c = std::cos(query.yaw);
  const double s = std::sin(query.yaw);

  double worst_roll = 0.0, worst_pitch = 0.0, worst_z = 0.0, worst_rmse = 0.0;
  bool any = false;
  PointCloud quad_cloud;
  quad_cloud.points = pts;
  for (const double su : {-1.0, 1.0}) {
    for (const double sv : {-1.0, 1.0}) {
      // Quadrant center in world coordinates.
      const double u = su * 0.25 * model.footprint_length;
      const double v = sv * 0.25 * model.footprint_width;
      const PoseSE2 quad_query{query.x + c * u - s * v, query.y + s * u + c * v,
                               query.yaw};
      const auto quad_pts = crop_footprint(quad_cloud, quad_query, ql, qw);
      const SettledPose sp = settle_from_points(quad_query, quad_pts, quad_support);
      if (sp.status != SettleStatus::Settled) continue;
      if (!any || std::abs(sp.pose.roll) > std::abs(worst_roll)) {
        worst_roll = sp.pose.roll;
      }
      if (!any || std::abs(sp.pose.pitch) > std::abs(worst_pitch)) {
        worst_pitch = sp.pose.pitch;
      }
      const PlaneFit quad_fit = fit_plane(quad_pts);
      const double zq = quad_fit.height_at(query.x, query.y);
      worst_z = any ? std::max(worst_z, zq) : zq;
      worst_rmse = std::max(worst_rmse, sp.fit_rmse);
      any = true;
    }
  }
  if (!any) return settle_from_points(query, pts, min_support);

  SettledPose out;
  out.pose = {query.x, query.y, worst_z, worst_roll, worst_pitch, query.yaw};
  out.normal = normal_from_attitude(worst_roll, worst_pitch, query.yaw);
  out.support_count = static_cast<int>(pts.size());
  out.fit_rmse = worst_rmse;
  out.status = SettleStatus::Settled;
  return out;
}

}  // namespace terranav
