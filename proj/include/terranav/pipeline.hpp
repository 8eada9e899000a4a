#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "terranav/geometry.hpp"
#include "terranav/robot_model.hpp"
#include "terranav/segmentation.hpp"
#include "terranav/traversability.hpp"

namespace terranav {

/// One costmap tier: fidelity regime plus geometric extent.
struct TierConfig {
  FidelityLevel fidelity;
  double range = 10.0;       // m
  double resolution = 0.10;  // m / cell
  int yaw_samples = 4;

  static TierConfig high() { return {FidelityLevel::high(), 10.0, 0.10, 4}; }
  static TierConfig mid() { return {FidelityLevel::mid(), 50.0, 0.25, 2}; }
  static TierConfig low() { return {FidelityLevel::low(), 100.0, 0.50, 1}; }
};

struct BeliefCell {
  double log_odds = 0.0;
  std::uint32_t observations = 0;
};

/// Long-range occupancy belief: per-cell occupancy probability in log-odds
/// form, a sufficient statistic of all past depth measurements.
struct OccupancyBelief {
  Grid2D<BeliefCell> grid;
  double l_hit = 0.8472978603872037;    // ln(0.7 / 0.3)
  double l_miss = -0.4054651081081645;  // ln(0.4 / 0.6)
  double l_min = -5.0;
  double l_max = 5.0;
  double occupied_threshold = 0.7;

  double probability_at(const GridIndex& idx) const {
    return 1.0 / (1.0 + std::exp(-grid.at(idx).log_odds));
  }
};

namespace detail {

/// Visits the cells crossed by the 2D segment from (x0,y0) to (x1,y1) in
/// order, excluding the endpoint cell. Out-of-grid cells are skipped.
template <typename Cell, typename Fn>
void trace_ray(const Grid2D<Cell>& grid, double x0, double y0, double x1,
               double y1, Fn&& visit) {
  const double res = grid.resolution();
  const double fx0 = (x0 - grid.origin_x()) / res;
  const double fy0 = (y0 - grid.origin_y()) / res;
  const double fx1 = (x1 - grid.origin_x()) / res;
  const double fy1 = (y1 - grid.origin_y()) / res;
  long i = static_cast<long>(std::floor(fx0));
  long j = static_cast<long>(std::floor(fy0));
  const long ie = static_cast<long>(std::floor(fx1));
  const long je = static_cast<long>(std::floor(fy1));
  const double dx = fx1 - fx0;
  const double dy = fy1 - fy0;
  const long step_i = dx > 0.0 ? 1 : -1;
  const long step_j = dy > 0.0 ? 1 : -1;
  const double inf = std::numeric_limits<double>::infinity();
  double t_max_x = inf, t_delta_x = inf;
  double t_max_y = inf, t_delta_y = inf;
  if (dx != 0.0) {
    const double next = step_i > 0 ? (i + 1 - fx0) : (fx0 - i);
    t_max_x = next / std::abs(dx);
    t_delta_x = 1.0 / std::abs(dx);
  }
  if (dy != 0.0) {
    const double next = step_j > 0 ? (j + 1 - fy0) : (fy0 - j);
    t_max_y = next / std::abs(dy);
    t_delta_y = 1.0 / std::abs(dy);
  }
  const long max_steps =
      std::abs(ie - i) + std::abs(je - j) + 4;  // walk cannot exceed this
  for (long step = 0; step < max_steps; ++step) {
    if (i == ie && j == je) return;
    const GridIndex idx{static_cast<int>(i), static_cast<int>(j)};
    if (grid.in_bounds(idx)) visit(idx);
    if (t_max_x < t_max_y) {
      t_max_x += t_delta_x;
      i += step_i;
    } else {
      t_max_y += t_delta_y;
      j += step_j;
    }
  }
}

}  // namespace detail

/// Integrates one scan of obstacle returns into the belief. The scan is
/// given in the sensor frame; each beam is traced in 2D from the sensor cell
/// to the endpoint cell, traversed cells accumulate l_miss and the endpoint
/// cell accumulates l_hit, all clamped to [l_min, l_max].
inline void occupancy_update_inplace(OccupancyBelief& belief,
                                     const PointCloud& scan,
                                     const PoseSE3& sensor_pose) {
  const Eigen::Matrix3d r = rotation_matrix(sensor_pose);
  const Eigen::Vector3d t = translation(sensor_pose);
  const auto bump = [&belief](const GridIndex& idx, double delta) {
    BeliefCell& cell = belief.grid.at(idx);
    cell.log_odds =
        std::clamp(cell.log_odds + delta, belief.l_min, belief.l_max);
    ++cell.observations;
  };
  for (const Point3& p : scan.points) {
    const Eigen::Vector3d w = r * to_eigen(p) + t;
    detail::trace_ray(belief.grid, t.x(), t.y(), w.x(), w.y(),
                      [&](const GridIndex& idx) { bump(idx, belief.l_miss); });
    if (const auto end = belief.grid.world_to_grid(w.x(), w.y())) {
      bump(*end, belief.l_hit);
    }
  }
}

inline OccupancyBelief occupancy_update(OccupancyBelief belief,
                                        const PointCloud& scan,
                                        const PoseSE3& sensor_pose) {
  occupancy_update_inplace(belief, scan, sensor_pose);
  return belief;
}

/// Free-space-only variant used for beams that ended on the ground: the
/// whole ray including the endpoint cell is evidence of traversable space.
inline void occupancy_update_free_inplace(OccupancyBelief& belief,
                                          const PointCloud& scan,
                                          const PoseSE3& sensor_pose) {
  const Eigen::Matrix3d r = rotation_matrix(sensor_pose);
  const Eigen::Vector3d t = translation(sensor_pose);
  const auto bump = [&belief](const GridIndex& idx) {
    BeliefCell& cell = belief.grid.at(idx);
    cell.log_odds =
        std::clamp(cell.log_odds + belief.l_miss, belief.l_min, belief.l_max);
    ++cell.observations;
  };
  for (const Point3& p : scan.points) {
    const Eigen::Vector3d w = r * to_eigen(p) + t;
    detail::trace_ray(belief.grid, t.x(), t.y(), w.x(), w.y(), bump);
    if (const auto end = belief.grid.world_to_grid(w.x(), w.y())) bump(*end);
  }
}

/// Projects the belief to a costmap layer: occupied cells (probability
/// strictly above the threshold) are LETHAL, never-observed cells are
/// UNKNOWN, everything else is free at cost 0. This tier only detects large
/// structure such as walls.
inline Grid2D<CellAssessment> belief_to_costmap(const OccupancyBelief& belief) {
  Grid2D<CellAssessment> out(belief.grid.origin_x(), belief.grid.origin_y(),
                             belief.grid.resolution(), belief.grid.width(),
                             belief.grid.height());
  for (int j = 0; j < belief.grid.height(); ++j) {
    for (int i = 0; i < belief.grid.width(); ++i) {
      const BeliefCell& b = belief.grid.at(i, j);
      CellAssessment& c = out.at(i, j);
      if (b.observations == 0) {
        c = CellAssessment::unknown_cell();
      } else if (1.0 / (1.0 + std::exp(-b.log_odds)) >
                 belief.occupied_threshold) {
        c.kind = CellKind::Lethal;
        c.flags = kFlagPositiveObstacle;
      } else {
        c.kind = CellKind::Free;
        c.cost = 0.0;
      }
    }
  }
  return out;
}

/// Immutable view of the three tiers after one ingestion. Consumers holding
/// a snapshot observe no mutation when further scans are ingested.
struct PipelineSnapshot {
  std::shared_ptr<const Grid2D<CellAssessment>> high;
  std::shared_ptr<const Grid2D<CellAssessment>> mid;
  std::shared_ptr<const Grid2D<CellAssessment>> low;
  double high_stamp = 0.0;
  double mid_stamp = 0.0;
  double low_stamp = 0.0;
  PoseSE3 high_pose_estimate;  // estimate current at the high tier's scan
};

struct PipelineConfig {
  TierConfig high = TierConfig::high();
  TierConfig mid = TierConfig::mid();
  TierConfig low = TierConfig::low();
  int window_capacity = 10;  // N scans fused by the mid tier
  RobotModel model;
  PoseSE3 sensor_mount;  // sensor frame relative to the body frame
  SegmentationParams segmentation;
  OccupancyBelief belief_template;  // carries update constants
  // World extent covered by the low-tier belief grid.
  double low_min_x = -100.0, low_min_y = -100.0;
  double low_max_x = 100.0, low_max_y = 100.0;
};

/// Support and density thresholds track expected point counts per cell
/// area, so coarser tiers accept proportionally sparser evidence.
inline RobotModel scaled_tier_model(const RobotModel& model, double high_res,
                                    double tier_res) {
  RobotModel scaled = model;
  const double f = (high_res * high_res) / (tier_res * tier_res);
  scaled.min_support_points =
      std::max(3, static_cast<int>(std::llround(model.min_support_points * f)));
  scaled.min_ground_density = model.min_ground_density * f;
  return scaled;
}

/// Maintains the three costmap tiers:
///  - high: rebuilt from the latest scan alone, in the ego (body) frame, so
///    its content is invariant to any localization error;
///  - mid: rebuilt from a moving window of the last N scans co-registered
///    with their pose estimates, world-fixed with a scrolling origin;
///  - low: an occupancy belief over the world, updated incrementally.
///
/// Single writer per instance; snapshots are immutable values that readers
/// may hold across ingestions.
class MultiFidelityPipeline {
 public:
  explicit MultiFidelityPipeline(PipelineConfig config)
      : config_(std::move(config)) {
    belief_ = config_.belief_template;
    const double res = config_.low.resolution;
    const int w = static_cast<int>(
        std::ceil((config_.low_max_x - config_.low_min_x) / res));
    const int h = static_cast<int>(
        std::ceil((config_.low_max_y - config_.low_min_y) / res));
    belief_.grid = Grid2D<BeliefCell>(config_.low_min_x, config_.low_min_y,
                                      res, std::max(1, w), std::max(1, h));
    snapshot_.low = std::make_shared<Grid2D<CellAssessment>>(
        belief_to_costmap(belief_));
  }

  /// Ingests one scan (sensor frame) with the pose estimate current at its
  /// stamp. Throws StaleScanError when the stamp does not advance and
  /// propagates EmptyCloudError for a dropped-out scan.
  /// `rebuild_mid` lets callers run the mid tier at a lower cadence.
  const PipelineSnapshot& ingest_scan(const PointCloud& scan,
                                      const PoseSE3& pose_estimate,
                                      bool rebuild_mid = true) {
    if (has_scans_ && scan.stamp <= last_stamp_) {
      throw StaleScanError("ingest_scan: stamp regressed");
    }
    last_stamp_ = scan.stamp;
    has_scans_ = true;

    // Segment once, in the sensor frame (origin is the sensor itself).
    const SegmentedCloud segmented =
        segment(scan, config_.segmentation, Point3{0.0, 0.0, 0.0});

    rebuild_high(segmented, scan.stamp);
    update_low(segmented, pose_estimate, scan.stamp);

    window_.push_back({scan, pose_estimate});
    while (static_cast<int>(window_.size()) > config_.window_capacity) {
      window_.pop_front();
    }
    if (rebuild_mid) {
      rebuild_mid_tier(pose_estimate, scan.stamp);
    }
    snapshot_.high_pose_estimate = pose_estimate;
    return snapshot_;
  }

  /// Recovery hook: drops all accumulated map state. The high tier is
  /// untouched (it is rebuilt from each scan anyway); the mid window empties
  /// and the low belief returns exactly to its prior.
  void clear_maps() {
    window_.clear();
    for (BeliefCell& c : belief_.grid.cells()) c = BeliefCell{};
    snapshot_.mid.reset();
    snapshot_.low = std::make_shared<Grid2D<CellAssessment>>(
        belief_to_costmap(belief_));
    snapshot_.mid_stamp = 0.0;
    snapshot_.low_stamp = last_stamp_;
  }

  const PipelineSnapshot& snapshot() const { return snapshot_; }
  const OccupancyBelief& belief() const { return belief_; }

  /// Stamps currently held in the mid-tier window, oldest first.
  std::vector<double> window_stamps() const {
    std::vector<double> out;
    out.reserve(window_.size());
    for (const auto& e : window_) out.push_back(e.scan.stamp);
    return out;
  }

  /// Fused cost query: answers from the finest tier whose range covers the
  /// point relative to the robot; UNKNOWN in a finer tier defers to the next
  /// coarser one. Returns nullopt when the point is beyond every tier.
  std::optional<std::pair<CellAssessment, FidelityTier>> query_cost(
      double x, double y, const PoseSE3& robot_pose) const {
    const double dx = x - robot_pose.x;
    const double dy = y - robot_pose.y;
    const double r = std::hypot(dx, dy);
    if (snapshot_.high && r <= config_.high.range) {
      const double c = std::cos(robot_pose.yaw);
      const double s = std::sin(robot_pose.yaw);
      const double u = c * dx + s * dy;
      const double v = -s * dx + c * dy;
      if (const auto idx = snapshot_.high->world_to_grid(u, v)) {
        const CellAssessment& cell = snapshot_.high->at(*idx);
        if (!cell.unknown()) return {{cell, FidelityTier::High}};
      }
    }
    if (snapshot_.mid && r <= config_.mid.range) {
      if (const auto idx = snapshot_.mid->world_to_grid(x, y)) {
        const CellAssessment& cell = snapshot_.mid->at(*idx);
        if (!cell.unknown()) return {{cell, FidelityTier::Mid}};
      }
    }
    if (snapshot_.low && r <= config_.low.range) {
      if (const auto idx = snapshot_.low->world_to_grid(x, y)) {
        return {{snapshot_.low->at(*idx), FidelityTier::Low}};
      }
      return {{CellAssessment::unknown_cell(), FidelityTier::Low}};
    }
    return std::nullopt;
  }

  const PipelineConfig& config() const { return config_; }

 private:
  struct WindowEntry {
    PointCloud scan;
    PoseSE3 estimate;
  };

  void rebuild_high(const SegmentedCloud& segmented_sensor, double stamp) {
    // Move the segmentation into the body frame via the fixed mount
    // transform; no pose estimate is involved, which is what makes this
    // tier immune to localization error.
    SegmentedCloud body;
    body.ground = transform_cloud(segmented_sensor.ground, config_.sensor_mount, "body");
    body.obstacle =
        transform_cloud(segmented_sensor.obstacle, config_.sensor_mount, "body");
    auto grid = std::make_shared<Grid2D<CellAssessment>>(build_costmap(
        body, PoseSE2{0.0, 0.0, 0.0}, config_.high.range,
        config_.high.resolution, config_.high.yaw_samples, config_.model,
        config_.high.fidelity));
    snapshot_.high = std::move(grid);
    snapshot_.high_stamp = stamp;
  }

  void update_low(const SegmentedCloud& segmented_sensor,
                  const PoseSE3& pose_estimate, double stamp) {
    const PoseSE3 sensor_world = compose(pose_estimate, config_.sensor_mount);
    occupancy_update_inplace(belief_, segmented_sensor.obstacle, sensor_world);
    occupancy_update_free_inplace(belief_, segmented_sensor.ground, sensor_world);
    snapshot_.low = std::make_shared<Grid2D<CellAssessment>>(
        belief_to_costmap(belief_));
    snapshot_.low_stamp = stamp;
  }

  void rebuild_mid_tier(const PoseSE3& pose_estimate, double stamp) {
    PointCloud merged;
    merged.frame_id = "map";
    merged.stamp = stamp;
    for (const WindowEntry& e : window_) {
      const PointCloud world =
          transform_cloud(e.scan, compose(e.estimate, config_.sensor_mount), "map");
      merged.points.insert(merged.points.end(), world.points.begin(),
                           world.points.end());
    }
    if (merged.empty()) return;
    const PoseSE3 sensor_world = compose(pose_estimate, config_.sensor_mount);
    const SegmentedCloud segmented =
        segment(merged, config_.segmentation,
                Point3{sensor_world.x, sensor_world.y, sensor_world.z});
    // Snap the center to the resolution lattice so cell boundaries stay
    // aligned while the origin scrolls with the robot.
    const double res = config_.mid.resolution;
    const PoseSE2 center{std::round(pose_estimate.x / res) * res,
                         std::round(pose_estimate.y / res) * res,
                         pose_estimate.yaw};
    const RobotModel mid_model = scaled_tier_model(
        config_.model, config_.high.resolution, config_.mid.resolution);
    snapshot_.mid = std::make_shared<Grid2D<CellAssessment>>(build_costmap(
        segmented, center, config_.mid.range, config_.mid.resolution,
        config_.mid.yaw_samples, mid_model, config_.mid.fidelity));
    snapshot_.mid_stamp = stamp;
  }

  PipelineConfig config_;
  std::deque<WindowEntry> window_;
  OccupancyBelief belief_;
  PipelineSnapshot snapshot_;
  double last_stamp_ = 0.0;
  bool has_scans_ = false;
};

}  // namespace terranav
