#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "terranav/geometry.hpp"

namespace terranav {

/// Physical and threshold parameters of one platform. Every traversability
/// metric is parameterized by this struct.
struct RobotModel {
  std::string name = "generic";
  double footprint_length = 1.0;       // m, along body x
  double footprint_width = 0.7;        // m, along body y
  double ground_clearance = 0.15;      // m, underside of body above ground
  double body_height = 0.5;            // m, top of body above ground
  double max_slope = 30.0 * kPi / 180.0;       // rad, tip-over threshold
  int collision_point_threshold = 5;           // colliding points tolerated
  double min_ground_density = 50.0;            // points / m^2
  int min_support_points = 20;                 // points needed to settle
  double max_speed = 1.0;                      // m/s

  double footprint_area() const { return footprint_length * footprint_width; }
};

/// Costmap fidelity regime. A smaller collision margin leaves a larger
/// effective collision box that reaches closer to the ground and therefore
/// detects smaller positive obstacles; coarse tiers raise the margin so that
/// features within the localization-noise magnitude are ignored.
enum class FidelityTier { High, Mid, Low };

struct FidelityLevel {
  FidelityTier tier = FidelityTier::High;
  double collision_margin = 0.0;        // m, collision box bottom raised by this
  double min_detectable_feature = 0.0;  // m, obstacles below this are ignored

  static FidelityLevel high() { return {FidelityTier::High, 0.0, 0.0}; }
  static FidelityLevel mid() { return {FidelityTier::Mid, 0.15, 0.15}; }
  static FidelityLevel low() { return {FidelityTier::Low, 0.30, 0.30}; }
};

inline const char* to_string(FidelityTier t) {
  switch (t) {
    case FidelityTier::High: return "high";
    case FidelityTier::Mid: return "mid";
    case FidelityTier::Low: return "low";
  }
  return "?";
}

/// Shipped platform presets. Maximum speeds are the published platform
/// limits; footprints and clearances are catalog estimates.
inline std::optional<RobotModel> robot_preset(const std::string& name) {
  RobotModel m;
  if (name == "husky") {
    m = {"husky", 0.99, 0.67, 0.13, 0.40, 30.0 * kPi / 180.0, 5, 50.0, 20, 1.0};
  } else if (name == "telemax") {
    m = {"telemax", 0.81, 0.58, 0.06, 0.45, 35.0 * kPi / 180.0, 5, 50.0, 20, 1.1};
  } else if (name == "xmaxx") {
    m = {"xmaxx", 0.77, 0.57, 0.11, 0.35, 25.0 * kPi / 180.0, 5, 50.0, 20, 22.0};
  } else if (name == "spot") {
    m = {"spot", 1.10, 0.50, 0.19, 0.85, 30.0 * kPi / 180.0, 5, 50.0, 20, 1.6};
  } else {
    return std::nullopt;
  }
  return m;
}

}  // namespace terranav
