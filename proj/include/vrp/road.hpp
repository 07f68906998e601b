#pragma once

#include <array>
#include <string>
#include <vector>

#include "vrp/types.hpp"

namespace vrp {

// One piece of a piecewise-constant-curvature center line: a straight
// (curvature == 0) or an arc.
struct RoadSegment {
  double length = 0.0;
  double curvature = 0.0;
};

// Speed limit valid from start_s until the next entry (or path end).
struct SpeedLimit {
  double start_s = 0.0;
  double v_max = 0.0;
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
};

struct Curvilinear {
  double s = 0.0;
  double d = 0.0;
  double mu = 0.0;
};

// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

// Center line plus lateral bounds and speed limits. Lateral offsets follow
// the convention d > 0 left of the path, so width_left <= 0 <= width_right
// bound d from below and above respectively.
//
// Queries taking an arc-length argument accept s in [0, total_length()] and
// throw ErrorCode::domain outside; at interior segment boundaries the later
// segment wins.
class RoadPath {
 public:
  RoadPath(std::vector<RoadSegment> segments, double width_left,
           double width_right, std::vector<SpeedLimit> speed_limits,
           Pose origin = {});

  static RoadPath from_json(const std::string& text);
  static RoadPath from_json_file(const std::string& path);
  std::string to_json() const;

  double total_length() const { return total_length_; }
  double width_left() const { return width_left_; }
  double width_right() const { return width_right_; }
  const std::vector<RoadSegment>& segments() const { return segments_; }
  const std::vector<SpeedLimit>& speed_limits() const { return speed_limits_; }
  Pose origin() const { return origin_; }

  double curvature_at(double s) const;
  double speed_limit_at(double s) const;
  double max_speed_limit() const;
  double max_abs_curvature() const;

  // Largest |curvature| over segments intersecting [s0, min(s1, length)].
  // Requires s0 <= s1 and s0 within the path; a zero-length window reduces to
  // |curvature_at(s0)|.
  double max_curvature_window(double s0, double s1) const;

  // Global pose of the point at lateral offset d, heading offset mu. Only
  // meaningful while |d * curvature| < 1.
  Pose global_pose(double s, double d, double mu) const;

  // Inverse of global_pose: curvilinear coordinates of a global pose. The
  // search window is local around s_hint and widens until a candidate
  // appears; among equally distant points the one nearest s_hint wins.
  // Throws ErrorCode::projection if nothing projects.
  Curvilinear project_to_path(double x, double y, double psi,
                              double s_hint) const;

 private:
  std::size_t segment_index(double s) const;

  std::vector<RoadSegment> segments_;
  double width_left_;
  double width_right_;
  std::vector<SpeedLimit> speed_limits_;
  Pose origin_;
  double total_length_ = 0.0;
  std::vector<double> seg_start_;        // cumulative arc length
  std::vector<Pose> seg_start_pose_;     // pose at each segment start
};

}  // namespace vrp
