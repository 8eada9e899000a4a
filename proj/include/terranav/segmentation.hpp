#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "terranav/geometry.hpp"
#include "terranav/robot_model.hpp"

namespace terranav {

/// Output of ground segmentation. The three parts partition the input
/// exactly: every input point appears in exactly one of them, and input
/// order is preserved within each part.
struct SegmentedCloud {
  PointCloud ground;
  PointCloud obstacle;
  PointCloud unassigned;  // beyond range, or ambiguous (below the profile)

  std::size_t total() const {
    return ground.size() + obstacle.size() + unassigned.size();
  }
};

struct SegmentationParams {
  int sector_count = 180;
  double bin_length = 0.5;                        // m, radial bin size
  double max_ground_slope = 30.0 * kPi / 180.0;   // rad
  double ground_distance_threshold = 0.10;        // m, vertical band around profile
  double max_range = 30.0;                        // m

  /// Ground is defined by what the platform can mechanically drive, so the
  /// slope limit defaults to the robot's tip-over threshold.
  static SegmentationParams for_robot(const RobotModel& model,
                                      double max_range = 30.0) {
    SegmentationParams p;
    p.max_ground_slope = model.max_slope;
    p.max_range = max_range;
    return p;
  }
};

namespace detail {

/// Piecewise-linear ground height profile over radial distance, per sector.
struct SectorProfile {
  std::vector<double> r;
  std::vector<double> z;

  bool empty() const { return r.empty(); }

  double height_at(double range) const {
    if (range <= r.front()) return z.front();
    if (range >= r.back()) return z.back();
    const auto it = std::upper_bound(r.begin(), r.end(), range);
    const std::size_t hi = static_cast<std::size_t>(it - r.begin());
    const std::size_t lo = hi - 1;
    const double t = (range - r[lo]) / (r[hi] - r[lo]);
    return z[lo] + t * (z[hi] - z[lo]);
  }
};

}  // namespace detail

/// Splits a depth scan into ground / obstacle / unassigned points.
///
/// The cloud is partitioned into azimuthal sectors around `sensor_origin`,
/// each sector's points are bucketed into radial bins, and a piecewise-linear
/// ground profile is grown outward per sector: a bin's lowest point extends
/// the profile when the connecting segment stays within `max_ground_slope`,
/// otherwise the profile holds its last height. A point is then
///   ground      iff |z - profile| <= ground_distance_threshold,
///   obstacle    iff z - profile  >  ground_distance_threshold,
///   unassigned  iff it is beyond max_range, below the profile by more than
///               the threshold, or its sector has no profile.
///
/// Throws EmptyCloudError on an empty input (sensor dropout upstream).
inline SegmentedCloud segment(const PointCloud& cloud,
                              const SegmentationParams& params,
                              const Point3& sensor_origin) {
  if (cloud.empty()) throw EmptyCloudError("segment: empty input cloud");

  const int sectors = params.sector_count;
  const double sector_width = 2.0 * kPi / sectors;

  struct PolarPoint {
    double range;
    double z;
    std::size_t index;
  };
  std::vector<int> sector_of(cloud.size(), -1);
  std::vector<double> range_of(cloud.size(), 0.0);
  std::vector<std::vector<PolarPoint>> per_sector(sectors);

  for (std::size_t k = 0; k < cloud.size(); ++k) {
    const Point3& p = cloud.points[k];
    const double dx = p.x - sensor_origin.x;
    const double dy = p.y - sensor_origin.y;
    const double r = std::hypot(dx, dy);
    range_of[k] = r;
    if (r > params.max_range) continue;  // stays unassigned
    const double theta = std::atan2(dy, dx);  // (-pi, pi]
    int s = static_cast<int>(std::floor((theta + kPi) / sector_width)) % sectors;
    if (s < 0) s += sectors;
    sector_of[k] = s;
    per_sector[s].push_back({r, p.z, k});
  }

  // Grow each sector's profile outward from its first occupied bin.
  std::vector<detail::SectorProfile> profiles(sectors);
  const double slope_tan = std::tan(params.max_ground_slope);
  for (int s = 0; s < sectors; ++s) {
    auto& pts = per_sector[s];
    if (pts.empty()) continue;
    std::sort(pts.begin(), pts.end(), [](const PolarPoint& a, const PolarPoint& b) {
      return a.range != b.range ? a.range < b.range : a.index < b.index;
    });
    detail::SectorProfile& prof = profiles[s];
    std::size_t i = 0;
    while (i < pts.size()) {
      const long bin = static_cast<long>(std::floor(pts[i].range / params.bin_length));
      double low_z = pts[i].z;
      double low_r = pts[i].range;
      std::size_t j = i;
      while (j < pts.size() &&
             static_cast<long>(std::floor(pts[j].range / params.bin_length)) == bin) {
        if (pts[j].z < low_z) {
          low_z = pts[j].z;
          low_r = pts[j].range;
        }
        ++j;
      }
      if (prof.empty()) {
        prof.r.push_back(low_r);
        prof.z.push_back(low_z);
      } else {
        const double dr = low_r - prof.r.back();
        const double dz = low_z - prof.z.back();
        if (dr > 0.0 && std::abs(dz) <= dr * slope_tan) {
          prof.r.push_back(low_r);
          prof.z.push_back(low_z);
        } else {
          // Too steep to be drivable terrain: hold the last ground height.
          prof.r.push_back(low_r);
          prof.z.push_back(prof.z.back());
        }
      }
      i = j;
    }
  }

  SegmentedCloud out;
  for (PointCloud* part : {&out.ground, &out.obstacle, &out.unassigned}) {
    part->frame_id = cloud.frame_id;
    part->stamp = cloud.stamp;
  }
  for (std::size_t k = 0; k < cloud.size(); ++k) {
    const Point3& p = cloud.points[k];
    const int s = sector_of[k];
    if (s < 0 || profiles[s].empty()) {
      out.unassigned.points.push_back(p);
      continue;
    }
    const double dz = p.z - profiles[s].height_at(range_of[k]);
    if (std::abs(dz) <= params.ground_distance_threshold) {
      out.ground.points.push_back(p);
    } else if (dz > params.ground_distance_threshold) {
      out.obstacle.points.push_back(p);
    } else {
      out.unassigned.points.push_back(p);
    }
  }
  return out;
}

}  // namespace terranav
