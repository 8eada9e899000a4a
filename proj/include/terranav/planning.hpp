#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <queue>
#include <string>
#include <vector>

#include "terranav/geometry.hpp"
#include "terranav/robot_model.hpp"
#include "terranav/traversability.hpp"

namespace terranav {

/// Geometric path over a costmap grid; consecutive waypoints are 8-neighbor
/// adjacent cell centers and total_cost is the sum of traversed step costs.
struct PathSE2 {
  std::vector<PoseSE2> waypoints;
  double total_cost = 0.0;
};

enum class UnknownCellMode {
  Impassable,  // default: err on the safe side
  Optimistic,  // exploration: unknown traversable at a fixed soft cost
};

struct PlannerParams {
  double cost_weight = 10.0;  // w in step = length * (1 + w * cellcost)
  UnknownCellMode unknown_mode = UnknownCellMode::Impassable;
  double unknown_cost = 0.5;  // soft cost of unknown cells when optimistic
};

namespace detail {

/// Traversal cost of entering a cell, or nullopt when impassable.
inline std::optional<double> cell_step_cost(const CellAssessment& cell,
                                            const PlannerParams& params) {
  switch (cell.kind) {
    case CellKind::Lethal:
      return std::nullopt;
    case CellKind::Unknown:
      if (params.unknown_mode == UnknownCellMode::Impassable) return std::nullopt;
      return params.unknown_cost;
    case CellKind::Free:
      return cell.cost;
  }
  return std::nullopt;
}

}  // namespace detail

/// Optimal 8-connected path on the costmap from start to goal under
/// step cost = euclidean step length * (1 + w * cellcost) of the entered
/// cell. LETHAL cells are impassable; UNKNOWN cells follow `unknown_mode`.
/// A* with the euclidean-distance heuristic (admissible: the factor is >= 1)
/// and deterministic tie-breaking by (f, h, row-major index).
///
/// Returns nullopt (no path) when the goal is unreachable, off the grid, or
/// the start cell is invalid.
inline std::optional<PathSE2> plan_geometric(const Grid2D<CellAssessment>& costmap,
                                             const PoseSE2& start,
                                             const PoseSE2& goal,
                                             const PlannerParams& params = {}) {
  const auto start_idx = costmap.world_to_grid(start.x, start.y);
  const auto goal_idx = costmap.world_to_grid(goal.x, goal.y);
  if (!start_idx || !goal_idx) return std::nullopt;
  if (!detail::cell_step_cost(costmap.at(*goal_idx), params)) return std::nullopt;
  if (costmap.at(*start_idx).lethal()) return std::nullopt;

  const int w = costmap.width();
  const int h = costmap.height();
  const double res = costmap.resolution();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const std::size_t start_k = costmap.index_of(*start_idx);
  const std::size_t goal_k = costmap.index_of(*goal_idx);

  const auto heuristic = [&](std::size_t k) {
    const int i = static_cast<int>(k % w);
    const int j = static_cast<int>(k / w);
    const double di = (i - goal_idx->i) * res;
    const double dj = (j - goal_idx->j) * res;
    return std::hypot(di, dj);
  };

  struct QueueEntry {
    double f;
    double h;
    std::size_t k;
    bool operator>(const QueueEntry& o) const {
      if (f != o.f) return f > o.f;
      if (h != o.h) return h > o.h;
      return k > o.k;
    }
  };

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> g(n, kInf);
  std::vector<std::int32_t> parent(n, -1);
  std::vector<bool> closed(n, false);
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>> open;
  g[start_k] = 0.0;
  open.push({heuristic(start_k), heuristic(start_k), start_k});

  static constexpr int kDi[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDj[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  const double diag = res * std::sqrt(2.0);

  while (!open.empty()) {
    const QueueEntry top = open.top();
    open.pop();
    if (closed[top.k]) continue;
    closed[top.k] = true;
    if (top.k == goal_k) break;
    const int i = static_cast<int>(top.k % w);
    const int j = static_cast<int>(top.k / w);
    for (int d = 0; d < 8; ++d) {
      const int ni = i + kDi[d];
      const int nj = j + kDj[d];
      if (ni < 0 || ni >= w || nj < 0 || nj >= h) continue;
      const std::size_t nk = static_cast<std::size_t>(nj) * w + ni;
      if (closed[nk]) continue;
      const auto soft = detail::cell_step_cost(costmap.at(ni, nj), params);
      if (!soft) continue;
      const double len = d < 4 ? res : diag;
      const double step = len * (1.0 + params.cost_weight * *soft);
      const double cand = g[top.k] + step;
      if (cand < g[nk]) {
        g[nk] = cand;
        parent[nk] = static_cast<std::int32_t>(top.k);
        const double hh = heuristic(nk);
        open.push({cand + hh, hh, nk});
      }
    }
  }

  if (!closed[goal_k]) return std::nullopt;

  std::vector<std::size_t> chain;
  for (std::int64_t k = static_cast<std::int64_t>(goal_k); k >= 0;
       k = parent[static_cast<std::size_t>(k)]) {
    chain.push_back(static_cast<std::size_t>(k));
    if (static_cast<std::size_t>(k) == start_k) break;
  }
  std::reverse(chain.begin(), chain.end());

  PathSE2 path;
  path.total_cost = g[goal_k];
  path.waypoints.reserve(chain.size());
  for (std::size_t c = 0; c < chain.size(); ++c) {
    const int i = static_cast<int>(chain[c] % w);
    const int j = static_cast<int>(chain[c] / w);
    const auto [x, y] = costmap.grid_to_world({i, j});
    double yaw = 0.0;
    if (c + 1 < chain.size()) {
      const int i2 = static_cast<int>(chain[c + 1] % w);
      const int j2 = static_cast<int>(chain[c + 1] / w);
      yaw = std::atan2(static_cast<double>(j2 - j), static_cast<double>(i2 - i));
    } else if (!path.waypoints.empty()) {
      yaw = path.waypoints.back().yaw;
    }
    path.waypoints.push_back({x, y, yaw});
  }
  return path;
}

/// A short feasible trajectory: a constant-curvature arc sampled densely
/// enough that no high-tier cell between samples is skipped.
struct MotionPrimitive {
  std::string id;
  double linear = 0.0;   // m/s
  double angular = 0.0;  // rad/s
  double duration = 0.0; // s
  std::vector<PoseSE2> samples;  // forward-integrated, starting at the origin
};

/// Exact unicycle pose after t seconds of constant (v, omega) from the origin.
inline PoseSE2 unicycle_pose(double v, double omega, double t) {
  if (std::abs(omega) < 1e-12) return {v * t, 0.0, 0.0};
  return {v / omega * std::sin(omega * t), v / omega * (1.0 - std::cos(omega * t)),
          normalize_angle(omega * t)};
}

/// Generates `count` constant-curvature arcs with angular velocities evenly
/// spanning [-omega_max, +omega_max] at the robot's speed limit, plus the
/// straight primitive (when not already present) and an in-place stop
/// primitive. Sample spacing along each arc stays within `sample_spacing`.
inline std::vector<MotionPrimitive> generate_primitives(
    const RobotModel& model, int count, double horizon, double omega_max = 1.0,
    double sample_spacing = 0.10) {
  std::vector<MotionPrimitive> out;
  const double v = model.max_speed;
  const double dt = sample_spacing / v;
  const int steps = std::max(1, static_cast<int>(std::ceil(horizon / dt)));
  bool has_straight = false;

  const auto make_arc = [&](double omega, const std::string& id) {
    MotionPrimitive mp;
    mp.id = id;
    mp.linear = v;
    mp.angular = omega;
    mp.duration = horizon;
    mp.samples.reserve(steps + 1);
    for (int k = 0; k <= steps; ++k) {
      const double t = std::min(horizon, k * dt);
      mp.samples.push_back(unicycle_pose(v, omega, t));
    }
    return mp;
  };

  for (int k = 0; k < count; ++k) {
    const double omega =
        count == 1 ? 0.0 : -omega_max + 2.0 * omega_max * k / (count - 1);
    char id[16];
    std::snprintf(id, sizeof(id), "arc%02d", k);
    if (std::abs(omega) < 1e-12) has_straight = true;
    out.push_back(make_arc(omega, id));
  }
  if (!has_straight) out.push_back(make_arc(0.0, "straight"));

  MotionPrimitive stop;
  stop.id = "stop";
  stop.duration = horizon;
  stop.samples.push_back({0.0, 0.0, 0.0});
  out.push_back(std::move(stop));
  return out;
}

struct PrimitiveSelectionParams {
  double cost_alpha = 1.0;     // weight of accumulated cell cost
  double dist_beta = 2.0;      // weight of endpoint distance to the path
  double lookahead = 2.0;      // m of path ahead of the robot to steer toward
};

namespace detail {

/// Point on the reference path `lookahead` meters past the waypoint nearest
/// to the robot; the endpoint-distance term is measured against it.
inline PoseSE2 lookahead_target(const PathSE2& path, const PoseSE3& robot_pose,
                                double lookahead) {
  const auto& wps = path.waypoints;
  std::size_t nearest = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < wps.size(); ++k) {
    const double d = std::hypot(wps[k].x - robot_pose.x, wps[k].y - robot_pose.y);
    if (d < best) {
      best = d;
      nearest = k;
    }
  }
  double traveled = 0.0;
  std::size_t k = nearest;
  while (k + 1 < wps.size() && traveled < lookahead) {
    traveled += std::hypot(wps[k + 1].x - wps[k].x, wps[k + 1].y - wps[k].y);
    ++k;
  }
  return wps[k];
}

}  // namespace detail

/// Picks the best surviving primitive against the ego-frame high tier:
/// discards any primitive whose samples touch LETHAL or UNKNOWN cells, then
/// minimizes alpha * (accumulated cell cost) + beta * (endpoint distance to
/// the reference path). Ties break on the primitive id. Returns nullopt when
/// every primitive is blocked.
inline std::optional<MotionPrimitive> select_primitive(
    const std::vector<MotionPrimitive>& primitives,
    const Grid2D<CellAssessment>& high_tier, const PathSE2& reference_path,
    const PoseSE3& robot_pose, const PrimitiveSelectionParams& params = {}) {
  if (reference_path.waypoints.empty()) return std::nullopt;
  const PoseSE2 target =
      detail::lookahead_target(reference_path, robot_pose, params.lookahead);
  const double c = std::cos(robot_pose.yaw);
  const double s = std::sin(robot_pose.yaw);

  const MotionPrimitive* best = nullptr;
  double best_score = std::numeric_limits<double>::infinity();
  for (const MotionPrimitive& mp : primitives) {
    double accumulated = 0.0;
    bool blocked = false;
    for (const PoseSE2& sample : mp.samples) {
      const auto idx = high_tier.world_to_grid(sample.x, sample.y);
      if (!idx) continue;  // beyond the tier: no evidence either way
      const CellAssessment& cell = high_tier.at(*idx);
      if (cell.lethal() || cell.unknown()) {
        blocked = true;
        break;
      }
      accumulated += cell.cost;
    }
    if (blocked) continue;
    const PoseSE2& end = mp.samples.back();
    const double ex = robot_pose.x + c * end.x - s * end.y;
    const double ey = robot_pose.y + s * end.x + c * end.y;
    const double dist = std::hypot(ex - target.x, ey - target.y);
    const double score = params.cost_alpha * accumulated + params.dist_beta * dist;
    if (score < best_score ||
        (score == best_score && best && mp.id < best->id)) {
      best_score = score;
      best = &mp;
    }
  }
  if (!best) return std::nullopt;
  return *best;
}

/// Path dump format: one "x y yaw" line per waypoint after a header comment
/// naming the source costmap stamp.
inline void write_path(std::ostream& os, const PathSE2& path, double costmap_stamp) {
  os << "# costmap_stamp " << costmap_stamp << "\n";
  char buf[120];
  for (const PoseSE2& wp : path.waypoints) {
    char* it = buf;
    for (double v : {wp.x, wp.y, wp.yaw}) {
      it = std::to_chars(it, buf + sizeof(buf), v).ptr;
      *it++ = ' ';
    }
    *(it - 1) = '\n';
    os.write(buf, it - buf);
  }
}

}  // namespace terranav
