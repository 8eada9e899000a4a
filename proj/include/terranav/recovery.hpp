#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "terranav/geometry.hpp"

namespace terranav {

enum class HealthEventKind {
  PlannerAllBlocked,
  NoPath,
  OdometryConfidenceLoss,
  StuckDetected,
  SensorDropout,
};

inline const char* to_string(HealthEventKind k) {
  switch (k) {
    case HealthEventKind::PlannerAllBlocked: return "PlannerAllBlocked";
    case HealthEventKind::NoPath: return "NoPath";
    case HealthEventKind::OdometryConfidenceLoss: return "OdometryConfidenceLoss";
    case HealthEventKind::StuckDetected: return "StuckDetected";
    case HealthEventKind::SensorDropout: return "SensorDropout";
  }
  return "?";
}

struct HealthEvent {
  HealthEventKind kind;
  double stamp = 0.0;
  std::string details;
};

/// Recovery behaviors in their fixed escalation order.
enum class RecoveryActionKind { ClearMap, Backtrack, OpenLoopEscape, WallFollow };

inline constexpr std::array<RecoveryActionKind, 4> kEscalationOrder = {
    RecoveryActionKind::ClearMap, RecoveryActionKind::Backtrack,
    RecoveryActionKind::OpenLoopEscape, RecoveryActionKind::WallFollow};

inline const char* to_string(RecoveryActionKind k) {
  switch (k) {
    case RecoveryActionKind::ClearMap: return "ClearMap";
    case RecoveryActionKind::Backtrack: return "Backtrack";
    case RecoveryActionKind::OpenLoopEscape: return "OpenLoopEscape";
    case RecoveryActionKind::WallFollow: return "WallFollow";
  }
  return "?";
}

enum class WallSide { Left, Right };

struct MonitorConfig {
  double stuck_window = 3.0;        // s of history examined
  double stuck_speed = 0.1;         // m/s commanded threshold
  double stuck_displacement = 0.05; // m realized threshold over the window
  int debounce_count = 3;           // consecutive planner failures tolerated
};

/// Per-tick monitor inputs. Planner fields are nullopt on ticks where the
/// corresponding stage did not run.
struct MonitorInputs {
  double stamp = 0.0;
  double commanded_speed = 0.0;   // |v| sent to the base this tick
  double estimate_x = 0.0;        // pose estimate, not ground truth
  double estimate_y = 0.0;
  std::optional<bool> no_path;
  std::optional<bool> all_blocked;
  std::optional<bool> scan_empty;
  bool odometry_fault = false;
};

/// Watches commanded-vs-realized motion, planner results, estimator faults
/// and scan statistics, and emits debounced health events. Deterministic
/// given the same tick inputs and internal window state.
class HealthMonitor {
 public:
  explicit HealthMonitor(MonitorConfig config = {}) : config_(config) {}

  std::vector<HealthEvent> tick(const MonitorInputs& in) {
    std::vector<HealthEvent> events;

    // Stuck: commanded to move throughout the window but barely displaced.
    window_.push_back({in.stamp, in.estimate_x, in.estimate_y, in.commanded_speed});
    while (window_.size() >= 2 &&
           window_[1].stamp <= in.stamp - config_.stuck_window) {
      window_.pop_front();
    }
    if (window_.front().stamp <= in.stamp - config_.stuck_window) {
      bool commanded_throughout = true;
      for (const Entry& e : window_) {
        if (e.commanded_speed <= config_.stuck_speed) {
          commanded_throughout = false;
          break;
        }
      }
      const double moved = std::hypot(in.estimate_x - window_.front().x,
                                      in.estimate_y - window_.front().y);
      if (commanded_throughout && moved < config_.stuck_displacement) {
        events.push_back({HealthEventKind::StuckDetected, in.stamp,
                          "displacement " + std::to_string(moved)});
        window_.clear();
        window_.push_back({in.stamp, in.estimate_x, in.estimate_y,
                           in.commanded_speed});
      }
    }

    debounced(in.no_path, no_path_count_, HealthEventKind::NoPath, in.stamp,
              events);
    debounced(in.all_blocked, all_blocked_count_,
              HealthEventKind::PlannerAllBlocked, in.stamp, events);

    if (in.scan_empty.value_or(false)) {
      events.push_back({HealthEventKind::SensorDropout, in.stamp, "empty scan"});
    }
    if (in.odometry_fault) {
      events.push_back(
          {HealthEventKind::OdometryConfidenceLoss, in.stamp, "estimator fault"});
    }
    return events;
  }

 private:
  struct Entry {
    double stamp;
    double x;
    double y;
    double commanded_speed;
  };

  void debounced(const std::optional<bool>& flag, int& count,
                 HealthEventKind kind, double stamp,
                 std::vector<HealthEvent>& events) const {
    if (!flag.has_value()) return;  // stage did not run this tick
    if (*flag) {
      ++count;
      if (count == config_.debounce_count) {
        events.push_back({kind, stamp, "debounced"});
      }
    } else {
      count = 0;
    }
  }

  MonitorConfig config_;
  std::deque<Entry> window_;
  mutable int no_path_count_ = 0;
  mutable int all_blocked_count_ = 0;
};

/// First action of the escalation order not yet attempted in the current
/// failure episode, or nullopt when the ladder is exhausted (the run then
/// terminates as a critical failure).
inline std::optional<RecoveryActionKind> next_recovery(
    const std::vector<RecoveryActionKind>& attempted_this_episode) {
  for (RecoveryActionKind kind : kEscalationOrder) {
    if (std::find(attempted_this_episode.begin(), attempted_this_episode.end(),
                  kind) == attempted_this_episode.end()) {
      return kind;
    }
  }
  return std::nullopt;
}

/// Tracks failure episodes: each unresolved failure requests the next
/// behavior in the escalation order, each behavior is attempted at most once
/// per episode, and the episode resets after `episode_reset` seconds without
/// failures.
class RecoveryLadder {
 public:
  explicit RecoveryLadder(double episode_reset = 30.0)
      : episode_reset_(episode_reset) {}

  std::optional<RecoveryActionKind> request(double stamp) {
    if (!attempted_.empty() && stamp - last_failure_stamp_ > episode_reset_) {
      attempted_.clear();
    }
    last_failure_stamp_ = stamp;
    const auto kind = next_recovery(attempted_);
    if (kind) attempted_.push_back(*kind);
    return kind;
  }

  const std::vector<RecoveryActionKind>& attempted() const { return attempted_; }

 private:
  double episode_reset_;
  double last_failure_stamp_ = -1e18;
  std::vector<RecoveryActionKind> attempted_;
};

/// Heading (world frame) of the most open angular sector of the scan: the
/// sector whose nearest return is farthest away. Sector 0 is centered on the
/// current heading and ties break toward it.
/// Throws EmptyCloudError on an empty scan; escalate instead of moving blind.
inline double escape_direction(const PointCloud& scan, const PoseSE3& sensor_pose,
                               int sector_count = 36) {
  if (scan.empty()) throw EmptyCloudError("escape_direction: empty scan");
  const double width = 2.0 * kPi / sector_count;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> nearest(sector_count, kInf);
  for (const Point3& p : scan.points) {
    const double bearing = std::atan2(p.y, p.x);
    int s = static_cast<int>(std::floor((bearing + 0.5 * width) / width));
    s = ((s % sector_count) + sector_count) % sector_count;
    nearest[s] = std::min(nearest[s], std::hypot(p.x, p.y));
  }
  int best = 0;
  double best_clearance = -kInf;
  double best_offset = kInf;
  for (int s = 0; s < sector_count; ++s) {
    const double center = normalize_angle(s * width);
    const double offset = std::abs(center);
    if (nearest[s] > best_clearance ||
        (nearest[s] == best_clearance &&
         (offset < best_offset || (offset == best_offset && center > 0)))) {
      best = s;
      best_clearance = nearest[s];
      best_offset = offset;
    }
  }
  return normalize_angle(sensor_pose.yaw + normalize_angle(best * width));
}

struct VelocityCommand {
  double linear = 0.0;   // m/s
  double angular = 0.0;  // rad/s
};

struct WallFollowParams {
  double gain = 2.0;        // rad/s per meter of standoff error
  double speed = 0.3;       // m/s fixed forward speed
  double max_angular = 1.0; // rad/s clamp
  double max_range = 3.0;   // m; farther returns do not count as a wall
};

/// One step of localization-free wall following: proportional control on the
/// nearest side-sector range against the standoff, at fixed forward speed.
/// Consumes only the instantaneous scan; no pose estimate enters here.
/// Returns nullopt (NoWall) when no return lies within range on the chosen
/// side; the caller switches sides once, then escalates.
inline std::optional<VelocityCommand> wall_follow_step(const PointCloud& scan,
                                                       WallSide side,
                                                       double standoff,
                                                       const WallFollowParams& params = {}) {
  const double lo = side == WallSide::Left ? kPi / 6.0 : -5.0 * kPi / 6.0;
  const double hi = side == WallSide::Left ? 5.0 * kPi / 6.0 : -kPi / 6.0;
  double nearest = std::numeric_limits<double>::infinity();
  for (const Point3& p : scan.points) {
    const double bearing = std::atan2(p.y, p.x);
    if (bearing < lo || bearing > hi) continue;
    nearest = std::min(nearest, std::hypot(p.x, p.y));
  }
  if (!(nearest <= params.max_range)) return std::nullopt;
  const double error = nearest - standoff;
  const double sign = side == WallSide::Left ? 1.0 : -1.0;
  const double angular =
      std::clamp(sign * params.gain * error, -params.max_angular, params.max_angular);
  return VelocityCommand{params.speed, angular};
}

// ---------------------------------------------------------------------------
// Event log: append-only "stamp kind action outcome" lines, consumed by the
// metrics reporter.
// ---------------------------------------------------------------------------

struct EventRecord {
  double stamp = 0.0;
  std::string kind;     // health event kind, "Collision", or "RunEnd"
  std::string action;   // recovery action or "-"
  std::string outcome;  // detected/started/succeeded/failed/exhausted/goal/...
};

inline void write_event(std::ostream& os, const EventRecord& rec) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), rec.stamp);
  os.write(buf, r.ptr - buf);
  os << ' ' << rec.kind << ' ' << rec.action << ' ' << rec.outcome << '\n';
}

inline std::optional<EventRecord> parse_event(std::string_view line) {
  EventRecord rec;
  std::array<std::string_view, 4> fields;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < 4; ++f) {
    while (pos < line.size() && line[pos] == ' ') ++pos;
    const std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ') ++pos;
    if (start == pos) return std::nullopt;
    fields[f] = line.substr(start, pos - start);
  }
  const auto r = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(),
                                 rec.stamp);
  if (r.ec != std::errc{}) return std::nullopt;
  rec.kind = std::string(fields[1]);
  rec.action = std::string(fields[2]);
  rec.outcome = std::string(fields[3]);
  return rec;
}

}  // namespace terranav
