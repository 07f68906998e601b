#include "vrp/road.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace vrp {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool finite(double x) { return std::isfinite(x); }

}  // namespace

double wrap_angle(double a) {
  double w = std::fmod(a + kPi, 2.0 * kPi);
  if (w <= 0.0) w += 2.0 * kPi;
  return w - kPi;
}

RoadPath::RoadPath(std::vector<RoadSegment> segments, double width_left,
                   double width_right, std::vector<SpeedLimit> speed_limits,
                   Pose origin)
    : segments_(std::move(segments)),
      width_left_(width_left),
      width_right_(width_right),
      speed_limits_(std::move(speed_limits)),
      origin_(origin) {
  if (segments_.empty()) {
    fail(ErrorCode::invalid_argument, "road needs at least one segment");
  }
  if (!(width_left_ <= 0.0) || !(width_right_ >= 0.0) ||
      !(width_right_ - width_left_ > 0.0)) {
    fail(ErrorCode::invalid_argument,
         "road widths must satisfy width_left <= 0 <= width_right");
  }
  seg_start_.reserve(segments_.size());
  seg_start_pose_.reserve(segments_.size());
  Pose pose = origin_;
  double s = 0.0;
  const double widest = std::max(std::abs(width_left_), width_right_);
  for (const auto& seg : segments_) {
    if (!(seg.length > 0.0) || !finite(seg.length) || !finite(seg.curvature)) {
      fail(ErrorCode::invalid_argument, "segment lengths must be positive");
    }
    if (std::abs(seg.curvature) * widest >= 1.0) {
      fail(ErrorCode::invalid_argument,
           "segment curvature too large for road width (|k|*w >= 1)");
    }
    seg_start_.push_back(s);
    seg_start_pose_.push_back(pose);
    const double th0 = pose.psi;
    if (seg.curvature == 0.0) {
      pose.x += seg.length * std::cos(th0);
      pose.y += seg.length * std::sin(th0);
    } else {
      const double th1 = th0 + seg.length * seg.curvature;
      pose.x += (std::sin(th1) - std::sin(th0)) / seg.curvature;
      pose.y -= (std::cos(th1) - std::cos(th0)) / seg.curvature;
      pose.psi = th1;
    }
    s += seg.length;
  }
  total_length_ = s;

  if (speed_limits_.empty()) {
    fail(ErrorCode::invalid_argument, "road needs at least one speed limit");
  }
  if (speed_limits_.front().start_s != 0.0) {
    fail(ErrorCode::invalid_argument, "first speed limit must start at s=0");
  }
  for (std::size_t i = 0; i < speed_limits_.size(); ++i) {
    if (!(speed_limits_[i].v_max > 0.0)) {
      fail(ErrorCode::invalid_argument, "speed limits must be positive");
    }
    if (i > 0 && !(speed_limits_[i].start_s > speed_limits_[i - 1].start_s)) {
      fail(ErrorCode::invalid_argument,
           "speed limit starts must strictly increase");
    }
  }
}

std::size_t RoadPath::segment_index(double s) const {
  // upper_bound - 1 makes the later segment win at shared boundaries.
  auto it = std::upper_bound(seg_start_.begin(), seg_start_.end(), s);
  std::size_t idx = static_cast<std::size_t>(it - seg_start_.begin());
  return idx == 0 ? 0 : idx - 1;
}

double RoadPath::curvature_at(double s) const {
  if (!(s >= 0.0) || !(s <= total_length_)) {
    fail(ErrorCode::domain, "curvature_at: s outside [0, length]");
  }
  return segments_[segment_index(s)].curvature;
}

double RoadPath::speed_limit_at(double s) const {
  if (!(s >= 0.0) || !(s <= total_length_)) {
    fail(ErrorCode::domain, "speed_limit_at: s outside [0, length]");
  }
  auto it = std::upper_bound(
      speed_limits_.begin(), speed_limits_.end(), s,
      [](double value, const SpeedLimit& lim) { return value < lim.start_s; });
  return (it == speed_limits_.begin() ? it : it - 1)->v_max;
}

double RoadPath::max_speed_limit() const {
  double m = 0.0;
  for (const auto& lim : speed_limits_) m = std::max(m, lim.v_max);
  return m;
}

double RoadPath::max_abs_curvature() const {
  double m = 0.0;
  for (const auto& seg : segments_) m = std::max(m, std::abs(seg.curvature));
  return m;
}

double RoadPath::max_curvature_window(double s0, double s1) const {
  if (!(s0 <= s1)) {
    fail(ErrorCode::invalid_argument, "max_curvature_window: s0 > s1");
  }
  if (!(s0 >= 0.0) || !(s0 <= total_length_)) {
    fail(ErrorCode::domain, "max_curvature_window: s0 outside [0, length]");
  }
  s1 = std::min(s1, total_length_);
  if (s0 == s1) return std::abs(curvature_at(s0));
  double m = 0.0;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const double a = seg_start_[i];
    const double b = a + segments_[i].length;
    if (a <= s1 && b > s0) m = std::max(m, std::abs(segments_[i].curvature));
  }
  return m;
}

Pose RoadPath::global_pose(double s, double d, double mu) const {
  if (!(s >= 0.0) || !(s <= total_length_)) {
    fail(ErrorCode::domain, "global_pose: s outside [0, length]");
  }
  const std::size_t i = segment_index(s);
  const RoadSegment& seg = segments_[i];
  const Pose& p0 = seg_start_pose_[i];
  const double u = s - seg_start_[i];
  double cx, cy, th;
  if (seg.curvature == 0.0) {
    th = p0.psi;
    cx = p0.x + u * std::cos(th);
    cy = p0.y + u * std::sin(th);
  } else {
    th = p0.psi + u * seg.curvature;
    cx = p0.x + (std::sin(th) - std::sin(p0.psi)) / seg.curvature;
    cy = p0.y - (std::cos(th) - std::cos(p0.psi)) / seg.curvature;
  }
  Pose out;
  out.x = cx - d * std::sin(th);
  out.y = cy + d * std::cos(th);
  out.psi = wrap_angle(th + mu);
  return out;
}

Curvilinear RoadPath::project_to_path(double x, double y, double psi,
                                      double s_hint) const {
  s_hint = std::clamp(s_hint, 0.0, total_length_);
  double best_dist2 = std::numeric_limits<double>::infinity();
  double best_s = -1.0;
  double best_hint_gap = std::numeric_limits<double>::infinity();

  const auto consider = [&](double s_cand) {
    const std::size_t i = segment_index(s_cand);
    const RoadSegment& seg = segments_[i];
    const Pose& p0 = seg_start_pose_[i];
    const double u = s_cand - seg_start_[i];
    double cx, cy, th;
    if (seg.curvature == 0.0) {
      th = p0.psi;
      cx = p0.x + u * std::cos(th);
      cy = p0.y + u * std::sin(th);
    } else {
      th = p0.psi + u * seg.curvature;
      cx = p0.x + (std::sin(th) - std::sin(p0.psi)) / seg.curvature;
      cy = p0.y - (std::cos(th) - std::cos(p0.psi)) / seg.curvature;
    }
    const double dx = x - cx;
    const double dy = y - cy;
    const double dist2 = dx * dx + dy * dy;
    const double hint_gap = std::abs(s_cand - s_hint);
    if (dist2 < best_dist2 - 1e-12 ||
        (dist2 < best_dist2 + 1e-12 && hint_gap < best_hint_gap)) {
      best_dist2 = dist2;
      best_s = s_cand;
      best_hint_gap = hint_gap;
    }
  };

  for (double window = 60.0; ; window *= 4.0) {
    const double lo = s_hint - window;
    const double hi = s_hint + window;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const double a = seg_start_[i];
      const double b = a + segments_[i].length;
      if (b < lo || a > hi) continue;
      const Pose& p0 = seg_start_pose_[i];
      const RoadSegment& seg = segments_[i];
      if (seg.curvature == 0.0) {
        const double tx = std::cos(p0.psi);
        const double ty = std::sin(p0.psi);
        const double t = (x - p0.x) * tx + (y - p0.y) * ty;
        consider(a + std::clamp(t, 0.0, seg.length));
      } else {
        // Center of the arc lies along the start normal at radius 1/k.
        const double nx = -std::sin(p0.psi);
        const double ny = std::cos(p0.psi);
        const double ccx = p0.x + nx / seg.curvature;
        const double ccy = p0.y + ny / seg.curvature;
        const double beta = std::atan2(y - ccy, x - ccx);
        const double th_target =
            beta + (seg.curvature > 0.0 ? kPi / 2.0 : -kPi / 2.0);
        double u = wrap_angle(th_target - p0.psi) / seg.curvature;
        const double period = 2.0 * kPi / std::abs(seg.curvature);
        if (u < 0.0) u += period;
        if (u <= seg.length) consider(a + u);
        consider(a);
        consider(a + seg.length);
      }
    }
    if (best_s >= 0.0 || window > total_length_ + 2.0 * 60.0) break;
  }
  if (best_s < 0.0) {
    fail(ErrorCode::projection, "project_to_path: no candidate found");
  }

  const std::size_t i = segment_index(best_s);
  const RoadSegment& seg = segments_[i];
  const Pose& p0 = seg_start_pose_[i];
  const double u = best_s - seg_start_[i];
  const double th =
      seg.curvature == 0.0 ? p0.psi : p0.psi + u * seg.curvature;
  Pose center = global_pose(best_s, 0.0, 0.0);
  Curvilinear out;
  out.s = best_s;
  out.d = -(x - center.x) * std::sin(th) + (y - center.y) * std::cos(th);
  out.mu = wrap_angle(psi - th);
  return out;
}

RoadPath RoadPath::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::io, std::string("scenario JSON parse error: ") + e.what());
  }
  try {
    std::vector<RoadSegment> segments;
    for (const auto& item : j.at("segments")) {
      segments.push_back({item.at(0).get<double>(), item.at(1).get<double>()});
    }
    std::vector<SpeedLimit> limits;
    for (const auto& item : j.at("speed_limits")) {
      limits.push_back({item.at(0).get<double>(), item.at(1).get<double>()});
    }
    Pose origin;
    if (j.contains("origin")) {
      origin.x = j["origin"].at(0).get<double>();
      origin.y = j["origin"].at(1).get<double>();
      origin.psi = j["origin"].at(2).get<double>();
    }
    return RoadPath(std::move(segments), j.at("width_left").get<double>(),
                    j.at("width_right").get<double>(), std::move(limits),
                    origin);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::io, std::string("scenario JSON schema error: ") + e.what());
  }
}

RoadPath RoadPath::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open scenario file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string RoadPath::to_json() const {
  nlohmann::json j;
  j["segments"] = nlohmann::json::array();
  for (const auto& seg : segments_) {
    j["segments"].push_back({seg.length, seg.curvature});
  }
  j["width_left"] = width_left_;
  j["width_right"] = width_right_;
  j["speed_limits"] = nlohmann::json::array();
  for (const auto& lim : speed_limits_) {
    j["speed_limits"].push_back({lim.start_s, lim.v_max});
  }
  j["origin"] = {origin_.x, origin_.y, origin_.psi};
  return j.dump(2);
}

}  // namespace vrp
