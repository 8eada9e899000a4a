#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "terranav/geometry.hpp"
#include "terranav/rng.hpp"
#include "terranav/robot_model.hpp"
#include "terranav/settling.hpp"

namespace terranav {

// ---------------------------------------------------------------------------
// Terrain
// ---------------------------------------------------------------------------

struct TerrainBase {
  enum class Kind { Flat, Slope, Rough };
  Kind kind = Kind::Flat;
  double slope = 0.0;      // rad, for Slope
  double direction = 0.0;  // rad, uphill azimuth for Slope
  double amplitude = 0.0;  // m, for Rough
  double scale = 2.0;      // m, horizontal feature size for Rough
};

/// A placed terrain primitive. Rect bounds are world coordinates; a cell
/// belongs to a feature when its center falls inside [x0,x1) x [y0,y1).
struct TerrainFeature {
  enum class Kind { Rock, Wall, Ramp, Stairs, Hole, Gap };
  Kind kind = Kind::Rock;
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
  double height = 0.0;           // rock/wall/gap height above local ground
  double z0 = 0.0, z1 = 0.0;     // ramp end heights
  int axis = 0;                  // 0: varies along x, 1: along y (ramp/stairs)
  double rise = 0.17, run = 0.29;  // stairs
  double gap_center = 0.0, gap_width = 0.0;  // gap opening (across `axis`)
};

struct TerrainSpec {
  double origin_x = 0.0, origin_y = 0.0;
  double size_x = 20.0, size_y = 20.0;
  double resolution = 0.1;
  TerrainBase base;
  std::vector<TerrainFeature> features;
};

/// 2.5D world: per-cell column heights; NaN marks void (hole) cells which
/// are never interpolated. Regeneration from (spec, seed) is bit-identical.
struct TerrainField {
  Grid2D<double> heightfield;
  TerrainSpec spec;
  std::uint64_t seed = 0;

  double height_at(double x, double y) const {
    const auto idx = heightfield.world_to_grid(x, y);
    if (!idx) return std::numeric_limits<double>::quiet_NaN();
    return heightfield.at(*idx);
  }
};

namespace detail {

/// Deterministic value noise on an integer lattice derived from the seed.
inline double lattice_noise(std::uint64_t seed, long xi, long yi) {
  std::uint64_t h = seed ^ (0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(xi) * 0xc2b2ae3d27d4eb4fULL +
                            static_cast<std::uint64_t>(yi) * 0x165667b19e3779f9ULL);
  return static_cast<double>(splitmix64(h) >> 11) * 0x1.0p-53;
}

inline double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const long xi = static_cast<long>(fx);
  const long yi = static_cast<long>(fy);
  const double tx = x - fx;
  const double ty = y - fy;
  const double sx = tx * tx * (3.0 - 2.0 * tx);  // smoothstep
  const double sy = ty * ty * (3.0 - 2.0 * ty);
  const double n00 = lattice_noise(seed, xi, yi);
  const double n10 = lattice_noise(seed, xi + 1, yi);
  const double n01 = lattice_noise(seed, xi, yi + 1);
  const double n11 = lattice_noise(seed, xi + 1, yi + 1);
  const double a = n00 + sx * (n10 - n00);
  const double b = n01 + sx * (n11 - n01);
  return 2.0 * (a + sy * (b - a)) - 1.0;  // [-1, 1]
}

}  // namespace detail

/// Builds the heightfield: base surface first, then features stamped in spec
/// order. Later features override earlier ones; a non-hole feature stamped
/// onto a void cell is a contradiction and raises InvalidSpecError.
inline TerrainField generate_terrain(const TerrainSpec& spec, std::uint64_t seed) {
  if (spec.size_x <= 0.0 || spec.size_y <= 0.0 || spec.resolution <= 0.0) {
    throw InvalidSpecError("generate_terrain: non-positive dimensions");
  }
  const int w = static_cast<int>(std::ceil(spec.size_x / spec.resolution));
  const int h = static_cast<int>(std::ceil(spec.size_y / spec.resolution));
  TerrainField field;
  field.spec = spec;
  field.seed = seed;
  field.heightfield =
      Grid2D<double>(spec.origin_x, spec.origin_y, spec.resolution, w, h, 0.0);

  auto& grid = field.heightfield;
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const auto [cx, cy] = grid.grid_to_world({i, j});
      double z = 0.0;
      switch (spec.base.kind) {
        case TerrainBase::Kind::Flat:
          break;
        case TerrainBase::Kind::Slope:
          z = std::tan(spec.base.slope) *
              ((cx - spec.origin_x) * std::cos(spec.base.direction) +
               (cy - spec.origin_y) * std::sin(spec.base.direction));
          break;
        case TerrainBase::Kind::Rough:
          z = spec.base.amplitude *
              (detail::value_noise(seed, cx / spec.base.scale, cy / spec.base.scale) +
               0.5 * detail::value_noise(seed ^ 0xabcdef12345ULL,
                                         2.0 * cx / spec.base.scale,
                                         2.0 * cy / spec.base.scale));
          break;
      }
      grid.at(i, j) = z;
    }
  }

  const auto stamp_rect = [&](double x0, double x1, double y0, double y1,
                              auto&& height_fn, bool makes_void) {
    for (int j = 0; j < h; ++j) {
      for (int i = 0; i < w; ++i) {
        const auto [cx, cy] = grid.grid_to_world({i, j});
        if (cx < x0 || cx >= x1 || cy < y0 || cy >= y1) continue;
        double& cell = grid.at(i, j);
        if (makes_void) {
          cell = std::numeric_limits<double>::quiet_NaN();
          continue;
        }
        if (std::isnan(cell)) {
          throw InvalidSpecError("generate_terrain: solid feature over a hole");
        }
        cell = height_fn(cx, cy, cell);
      }
    }
  };

  for (const TerrainFeature& f : spec.features) {
    switch (f.kind) {
      case TerrainFeature::Kind::Rock:
      case TerrainFeature::Kind::Wall:
        stamp_rect(f.x0, f.x1, f.y0, f.y1,
                   [&](double, double, double base) { return base + f.height; },
                   false);
        break;
      case TerrainFeature::Kind::Ramp:
        stamp_rect(f.x0, f.x1, f.y0, f.y1,
                   [&](double cx, double cy, double base) {
                     const double t = f.axis == 0 ? (cx - f.x0) / (f.x1 - f.x0)
                                                  : (cy - f.y0) / (f.y1 - f.y0);
                     return base + f.z0 + t * (f.z1 - f.z0);
                   },
                   false);
        break;
      case TerrainFeature::Kind::Stairs:
        stamp_rect(f.x0, f.x1, f.y0, f.y1,
                   [&](double cx, double cy, double base) {
                     const double along = f.axis == 0 ? cx - f.x0 : cy - f.y0;
                     const double k = std::floor(along / f.run);
                     return base + (k + 1.0) * f.rise;
                   },
                   false);
        break;
      case TerrainFeature::Kind::Hole:
        stamp_rect(f.x0, f.x1, f.y0, f.y1,
                   [](double, double, double z) { return z; }, true);
        break;
      case TerrainFeature::Kind::Gap: {
        // Two wall stubs leaving an opening centered at gap_center.
        const double half = 0.5 * f.gap_width;
        if (f.axis == 0) {
          stamp_rect(f.x0, f.x1, f.y0, f.gap_center - half,
                     [&](double, double, double base) { return base + f.height; },
                     false);
          stamp_rect(f.x0, f.x1, f.gap_center + half, f.y1,
                     [&](double, double, double base) { return base + f.height; },
                     false);
        } else {
          stamp_rect(f.x0, f.gap_center - half, f.y0, f.y1,
                     [&](double, double, double base) { return base + f.height; },
                     false);
          stamp_rect(f.gap_center + half, f.x1, f.y0, f.y1,
                     [&](double, double, double base) { return base + f.height; },
                     false);
        }
        break;
      }
    }
  }
  return field;
}

// ---------------------------------------------------------------------------
// Depth sensor
// ---------------------------------------------------------------------------

/// Angular lattice depth sensor with gaussian range noise and per-return
/// dropout. Obscurants are modeled by raising dropout and noise.
struct SensorSpec {
  double horizontal_fov = 2.0 * kPi;  // rad
  double vertical_fov = 70.0 * kPi / 180.0;
  double angular_resolution = 1.5 * kPi / 180.0;
  double max_range = 15.0;            // m
  double range_noise_sigma = 0.0;     // m
  double dropout_probability = 0.0;   // [0, 1]
  PoseSE3 mount_pose;                 // sensor relative to the body frame
};

/// Casts one scan against the terrain: one ray per (azimuth, elevation)
/// lattice node, marched across heightfield columns and the vertical faces
/// between columns of different heights. Hit ranges are perturbed by
/// gaussian noise and whole returns dropped with dropout_probability.
///
/// Void (NaN) columns produce absence: rays over them return nothing, and
/// faces adjacent to a void are not generated, so no return ever lies over a
/// NaN cell. The output cloud is in the sensor frame.
inline PointCloud render_scan(const TerrainField& terrain,
                              const PoseSE3& sensor_pose, const SensorSpec& spec,
                              Rng& rng, double stamp = 0.0) {
  PointCloud cloud;
  cloud.frame_id = "sensor";
  cloud.stamp = stamp;

  const Eigen::Matrix3d rot = rotation_matrix(sensor_pose);
  const Eigen::Vector3d origin = translation(sensor_pose);
  const auto& grid = terrain.heightfield;
  const double res = grid.resolution();

  const int n_az = std::max(
      1, static_cast<int>(std::llround(spec.horizontal_fov / spec.angular_resolution)));
  const int n_el = std::max(
      1, static_cast<int>(std::llround(spec.vertical_fov / spec.angular_resolution)));

  for (int ia = 0; ia < n_az; ++ia) {
    const double az = -0.5 * spec.horizontal_fov +
                      (ia + 0.5) * spec.horizontal_fov / n_az;
    for (int ie = 0; ie < n_el; ++ie) {
      const double el = -0.5 * spec.vertical_fov +
                        (ie + 0.5) * spec.vertical_fov / n_el;
      const Eigen::Vector3d dir_sensor(std::cos(el) * std::cos(az),
                                       std::cos(el) * std::sin(az), std::sin(el));
      const Eigen::Vector3d d = rot * dir_sensor;

      // Walk the heightfield columns crossed by the ray's 2D projection.
      double hit_t = -1.0;
      const double fx = (origin.x() - grid.origin_x()) / res;
      const double fy = (origin.y() - grid.origin_y()) / res;
      long i = static_cast<long>(std::floor(fx));
      long j = static_cast<long>(std::floor(fy));
      const double dxy = std::hypot(d.x(), d.y());
      if (dxy < 1e-12) {
        // Degenerate: vertical ray, single column.
        const GridIndex idx{static_cast<int>(i), static_cast<int>(j)};
        if (grid.in_bounds(idx) && !std::isnan(grid.at(idx)) && d.z() < 0.0) {
          const double t = (grid.at(idx) - origin.z()) / d.z();
          if (t >= 0.0 && t <= spec.max_range) hit_t = t;
        }
      } else {
        const long step_i = d.x() > 0.0 ? 1 : -1;
        const long step_j = d.y() > 0.0 ? 1 : -1;
        const double inf = std::numeric_limits<double>::infinity();
        double t_max_x = inf, t_delta_x = inf, t_max_y = inf, t_delta_y = inf;
        if (d.x() != 0.0) {
          const double next = step_i > 0 ? (i + 1 - fx) : (fx - i);
          t_max_x = next * res / std::abs(d.x());
          t_delta_x = res / std::abs(d.x());
        }
        if (d.y() != 0.0) {
          const double next = step_j > 0 ? (j + 1 - fy) : (fy - j);
          t_max_y = next * res / std::abs(d.y());
          t_delta_y = res / std::abs(d.y());
        }
        double te = 0.0;
        bool prev_finite = false;
        bool first_cell = true;
        while (te <= spec.max_range) {
          const double tx = std::min(t_max_x, t_max_y);
          const GridIndex idx{static_cast<int>(i), static_cast<int>(j)};
          const bool inside = grid.in_bounds(idx);
          const double hcol = inside ? grid.at(idx)
                                     : std::numeric_limits<double>::quiet_NaN();
          if (!std::isnan(hcol)) {
            const double ze = origin.z() + d.z() * te;
            if (ze < hcol && !first_cell) {
              // Entering below the column top: vertical face hit, but faces
              // next to a void are not generated (the cliff into a hole is
              // invisible; the density check is what catches it).
              if (prev_finite && te <= spec.max_range) hit_t = te;
              break;
            }
            if (d.z() < 0.0) {
              const double t_surf = (hcol - origin.z()) / d.z();
              if (t_surf >= te && t_surf <= std::min(tx, spec.max_range)) {
                hit_t = t_surf;
                break;
              }
            }
            prev_finite = true;
          } else {
            prev_finite = false;
          }
          first_cell = false;
          te = tx;
          if (t_max_x < t_max_y) {
            t_max_x += t_delta_x;
            i += step_i;
          } else {
            t_max_y += t_delta_y;
            j += step_j;
          }
        }
      }

      if (hit_t < 0.0) continue;
      if (spec.dropout_probability > 0.0 &&
          rng.uniform01() < spec.dropout_probability) {
        continue;
      }
      double r = hit_t;
      if (spec.range_noise_sigma > 0.0) {
        r += spec.range_noise_sigma * rng.gaussian();
      }
      if (r <= 0.0) continue;
      cloud.points.push_back(
          {r * dir_sensor.x(), r * dir_sensor.y(), r * dir_sensor.z()});
    }
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Dynamics
// ---------------------------------------------------------------------------

struct SimState {
  PoseSE3 pose;
  double v = 0.0;      // realized linear speed
  double omega = 0.0;  // realized angular speed
};

enum class CollisionKind { BodyCollision, HoleFall };

inline const char* to_string(CollisionKind k) {
  switch (k) {
    case CollisionKind::BodyCollision: return "BodyCollision";
    case CollisionKind::HoleFall: return "HoleFall";
  }
  return "?";
}

struct StepResult {
  SimState state;
  std::optional<CollisionKind> collision;
};

/// Finite heightfield samples (cell centers) under the footprint rectangle.
inline std::vector<Point3> terrain_footprint_points(const TerrainField& terrain,
                                                    const PoseSE2& query,
                                                    double length, double width) {
  const auto& grid = terrain.heightfield;
  const double res = grid.resolution();
  const double c = std::cos(query.yaw);
  const double s = std::sin(query.yaw);
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  const double rx = std::abs(c) * hl + std::abs(s) * hw;
  const double ry = std::abs(s) * hl + std::abs(c) * hw;
  std::vector<Point3> out;
  const int i0 = std::max(0, static_cast<int>(std::floor((query.x - rx - grid.origin_x()) / res)));
  const int i1 = std::min(grid.width() - 1,
                          static_cast<int>(std::floor((query.x + rx - grid.origin_x()) / res)));
  const int j0 = std::max(0, static_cast<int>(std::floor((query.y - ry - grid.origin_y()) / res)));
  const int j1 = std::min(grid.height() - 1,
                          static_cast<int>(std::floor((query.y + ry - grid.origin_y()) / res)));
  for (int j = j0; j <= j1; ++j) {
    for (int i = i0; i <= i1; ++i) {
      const auto [cx, cy] = grid.grid_to_world({i, j});
      const double dx = cx - query.x;
      const double dy = cy - query.y;
      const double u = c * dx + s * dy;
      const double w = -s * dx + c * dy;
      if (std::abs(u) > hl || std::abs(w) > hw) continue;
      const double z = grid.at(i, j);
      if (std::isnan(z)) continue;
      out.push_back({cx, cy, z});
    }
  }
  return out;
}

/// Advances the unicycle one step: exact constant-curvature integration of
/// the clamped command, then z/roll/pitch slaved to the true terrain by
/// settling the footprint on the heightfield. Driving the body into terrain
/// that rises above the ground clearance freezes the position and reports a
/// collision event; losing the supporting ground under the robot center
/// reports a hole fall. Per-step displacement never exceeds v_max * dt.
inline StepResult step_dynamics(const SimState& state, double cmd_v,
                                double cmd_omega, double dt,
                                const TerrainField& terrain,
                                const RobotModel& model) {
  if (!(dt > 0.0 && dt <= 0.1)) {
    throw Error("step_dynamics: dt must be in (0, 0.1]");
  }
  const double v = std::clamp(cmd_v, -model.max_speed, model.max_speed);
  const double omega = std::clamp(cmd_omega, -2.0, 2.0);

  const double yaw0 = state.pose.yaw;
  double x = state.pose.x;
  double y = state.pose.y;
  double yaw = normalize_angle(yaw0 + omega * dt);
  if (std::abs(omega) < 1e-12) {
    x += v * dt * std::cos(yaw0);
    y += v * dt * std::sin(yaw0);
  } else {
    x += v / omega * (std::sin(yaw0 + omega * dt) - std::sin(yaw0));
    y -= v / omega * (std::cos(yaw0 + omega * dt) - std::cos(yaw0));
  }

  StepResult result;
  result.state = state;

  // Fall check: the supporting cell under the robot center must exist.
  const double center_h = terrain.height_at(x, y);
  if (std::isnan(center_h)) {
    result.collision = CollisionKind::HoleFall;
    result.state.v = 0.0;
    result.state.omega = 0.0;
    return result;
  }

  const auto support = terrain_footprint_points(
      terrain, {x, y, yaw}, model.footprint_length, model.footprint_width);
  if (support.size() < 3) {
    result.collision = CollisionKind::HoleFall;
    result.state.v = 0.0;
    result.state.omega = 0.0;
    return result;
  }

  PlaneFit fit;
  try {
    fit = fit_plane(support);
  } catch (const DegenerateFitError&) {
    result.collision = CollisionKind::HoleFall;
    result.state.v = 0.0;
    result.state.omega = 0.0;
    return result;
  }

  // Body collision: any column under the footprint rising above clearance.
  for (const Point3& p : support) {
    if (p.z - fit.height_at(p.x, p.y) > model.ground_clearance) {
      result.collision = CollisionKind::BodyCollision;
      result.state.v = 0.0;
      result.state.omega = 0.0;
      return result;
    }
  }

  const auto [roll, pitch] = attitude_from_normal(fit.normal, yaw);
  result.state.pose = {x, y, fit.height_at(x, y), roll, pitch, yaw};
  result.state.v = v;
  result.state.omega = omega;
  return result;
}

/// Overload for any command type exposing linear/angular members.
template <typename Command>
StepResult step_dynamics(const SimState& state, const Command& command, double dt,
                         const TerrainField& terrain, const RobotModel& model) {
  return step_dynamics(state, command.linear, command.angular, dt, terrain, model);
}

// ---------------------------------------------------------------------------
// Localization drift
// ---------------------------------------------------------------------------

struct DriftFault {
  double time = 0.0;
  std::string kind;  // currently: "odom_loss"
};

/// Random-walk pose estimator error with constant biases and scripted fault
/// events, all deterministic under a fixed seed.
struct DriftModel {
  double sigma_xy = 0.0;   // m / sqrt(s), independently per axis
  double sigma_z = 0.0;    // m / sqrt(s)
  double sigma_yaw = 0.0;  // rad / sqrt(s)
  double bias_x = 0.0, bias_y = 0.0, bias_yaw = 0.0;  // per second
  std::vector<DriftFault> fault_script;
};

struct DriftState {
  double dx = 0.0, dy = 0.0, dz = 0.0, dyaw = 0.0;
  std::size_t next_fault = 0;
};

/// Advances the drift walk by dt and produces the pose estimate for the
/// given truth. Scripted faults whose time has come are appended to `fired`
/// exactly once.
inline PoseSE3 perturb_pose(const PoseSE3& true_pose, const DriftModel& model,
                            DriftState& state, double dt, double now, Rng& rng,
                            std::vector<DriftFault>* fired = nullptr) {
  const double sq = std::sqrt(dt);
  state.dx += model.sigma_xy * sq * rng.gaussian() + model.bias_x * dt;
  state.dy += model.sigma_xy * sq * rng.gaussian() + model.bias_y * dt;
  state.dz += model.sigma_z * sq * rng.gaussian();
  state.dyaw += model.sigma_yaw * sq * rng.gaussian() + model.bias_yaw * dt;
  while (state.next_fault < model.fault_script.size() &&
         model.fault_script[state.next_fault].time <= now) {
    if (fired) fired->push_back(model.fault_script[state.next_fault]);
    ++state.next_fault;
  }
  PoseSE3 est = true_pose;
  est.x += state.dx;
  est.y += state.dy;
  est.z += state.dz;
  est.yaw = normalize_angle(est.yaw + state.dyaw);
  return est;
}

/// Optional visualization dump: heights scaled into 1..253, void cells 255.
inline void write_heightfield_pgm(const std::string& path,
                                  const TerrainField& terrain) {
  const auto& grid = terrain.heightfield;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double z : grid.cells()) {
    if (std::isnan(z)) continue;
    lo = std::min(lo, z);
    hi = std::max(hi, z);
  }
  if (!(hi > lo)) hi = lo + 1.0;
  std::ofstream pgm(path, std::ios::binary);
  if (!pgm) throw Error("write_heightfield_pgm: cannot open " + path);
  pgm << "P5\n" << grid.width() << " " << grid.height() << "\n255\n";
  for (int j = 0; j < grid.height(); ++j) {
    for (int i = 0; i < grid.width(); ++i) {
      const double z = grid.at(i, j);
      unsigned char px = 255;
      if (!std::isnan(z)) {
        px = static_cast<unsigned char>(1 + std::lround(252.0 * (z - lo) / (hi - lo)));
      }
      pgm.put(static_cast<char>(px));
    }
  }
  std::ofstream meta(path + ".meta");
  meta << "origin_x " << grid.origin_x() << "\norigin_y " << grid.origin_y()
       << "\nresolution " << grid.resolution() << "\nmin_z " << lo << "\nmax_z "
       << hi << "\n";
}

}  // namespace terranav
