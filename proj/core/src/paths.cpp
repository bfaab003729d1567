#include "zst/paths.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "zst/csv.hpp"
#include "zst/dynamics.hpp"

namespace zst {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace

// ---------------------------------------------------------------------------
// SpeedProfile

SpeedProfile SpeedProfile::constant(double speed) { return SpeedProfile({{1.0, speed}}, 0.0); }

SpeedProfile SpeedProfile::halves(double first, double second, double ramp_length) {
  return SpeedProfile({{0.5, first}, {1.0, second}}, ramp_length);
}

SpeedProfile::SpeedProfile(std::vector<Interval> intervals, double ramp_length, bool fractional)
    : intervals_(std::move(intervals)), ramp_(ramp_length), fractional_(fractional) {
  if (intervals_.empty()) throw std::invalid_argument("speed profile needs at least one interval");
  if (!(ramp_ >= 0.0)) throw std::invalid_argument("speed profile ramp length must be >= 0");
  double previous_end = 0.0;
  for (const Interval& interval : intervals_) {
    if (!(interval.speed >= 0.0) || !std::isfinite(interval.speed)) {
      throw std::invalid_argument("speed profile speeds must be finite and >= 0");
    }
    if (!(interval.end > previous_end)) {
      throw std::invalid_argument("speed profile interval ends must be strictly increasing");
    }
    previous_end = interval.end;
  }
  if (fractional_ && std::abs(previous_end - 1.0) > 1e-12) {
    throw std::invalid_argument("fractional speed profile must end at 1");
  }
}

bool SpeedProfile::is_constant() const {
  return std::all_of(intervals_.begin(), intervals_.end(),
                     [&](const Interval& i) { return i.speed == intervals_.front().speed; });
}

double SpeedProfile::speed_at(double s, double total_length, bool closed) const {
  const double scale = fractional_ ? total_length : 1.0;
  const std::size_t count = intervals_.size();
  s = std::clamp(s, 0.0, total_length);

  std::size_t i = 0;
  while (i + 1 < count && s >= intervals_[i].end * scale) ++i;
  const double start = i == 0 ? 0.0 : intervals_[i - 1].end * scale;
  const double end = i + 1 == count ? total_length : intervals_[i].end * scale;
  const double speed = intervals_[i].speed;
  if (ramp_ <= 0.0 || count == 1) return speed;

  const double ramp = std::min(ramp_, end - start);
  double result = speed;
  const bool has_previous = i > 0 || closed;
  const bool has_next = i + 1 < count || closed;
  if (has_previous) {
    const double previous = intervals_[i == 0 ? count - 1 : i - 1].speed;
    const double into = s - start;
    if (previous < speed && into < ramp) {
      result = std::min(result, previous + (speed - previous) * into / ramp);
    }
  }
  if (has_next) {
    const double next = intervals_[i + 1 == count ? 0 : i + 1].speed;
    const double left = end - s;
    if (next < speed && left < ramp) {
      result = std::min(result, next + (speed - next) * left / ramp);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// ReferencePath

ReferencePath::ReferencePath(std::vector<ReferenceSample> samples, bool closed, std::string name)
    : samples_(std::move(samples)), closed_(closed), name_(std::move(name)) {
  if (samples_.size() < 2) throw std::invalid_argument("reference path needs at least 2 samples");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const ReferenceSample& r = samples_[i];
    if (!std::isfinite(r.x) || !std::isfinite(r.y) || !std::isfinite(r.theta) ||
        !std::isfinite(r.v) || !std::isfinite(r.s) || r.v < 0.0) {
      throw std::invalid_argument("reference sample " + std::to_string(i) + " is invalid");
    }
    if (i > 0 && !(r.s > samples_[i - 1].s)) {
      throw std::invalid_argument("reference arc length not increasing at sample " +
                                  std::to_string(i));
    }
  }
  length_ = samples_.back().s - samples_.front().s;
  if (closed_) length_ += (samples_.back().position() - samples_.front().position()).norm();

  const std::size_t n = samples_.size();
  curvature_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t lo = i == 0 ? (closed_ ? n - 1 : 0) : i - 1;
    std::size_t hi = i + 1 == n ? (closed_ ? 0 : n - 1) : i + 1;
    double ds = samples_[hi].s - samples_[lo].s;
    if (closed_ && ds <= 0.0) ds += length_;
    curvature_[i] = ds > 0.0 ? wrap_angle(samples_[hi].theta - samples_[lo].theta) / ds : 0.0;
  }
}

double ReferencePath::max_gap() const {
  double gap = 0.0;
  for (std::size_t i = 1; i < samples_.size(); ++i) {
    gap = std::max(gap, (samples_[i].position() - samples_[i - 1].position()).norm());
  }
  if (closed_) gap = std::max(gap, (samples_.back().position() - samples_.front().position()).norm());
  return gap;
}

std::size_t ReferencePath::index_at(double s) const {
  const double s0 = samples_.front().s;
  double rel = s - s0;
  if (closed_) {
    rel = std::fmod(rel, length_);
    if (rel < 0.0) rel += length_;
  } else {
    rel = std::clamp(rel, 0.0, samples_.back().s - s0);
  }
  const double target = s0 + rel;
  auto it = std::lower_bound(samples_.begin(), samples_.end(), target,
                             [](const ReferenceSample& r, double value) { return r.s < value; });
  if (it == samples_.end()) {
    // Past the last sample: only possible on loops, inside the closing gap.
    const double to_last = target - samples_.back().s;
    const double to_first = (s0 + length_) - target;
    return to_first < to_last ? 0 : samples_.size() - 1;
  }
  const auto index = static_cast<std::size_t>(it - samples_.begin());
  if (index == 0) return 0;
  return (it->s - target) < (target - samples_[index - 1].s) ? index : index - 1;
}

double ReferencePath::advance(std::size_t from, std::size_t to) const {
  double delta = samples_[to].s - samples_[from].s;
  if (closed_ && delta < 0.0) delta += length_;
  return delta;
}

// ---------------------------------------------------------------------------
// Generators

namespace {

void check_spacing(double spacing, double limit, const char* what) {
  if (!(spacing > 0.0) || !(spacing <= limit)) {
    throw std::invalid_argument(std::string("spacing must lie in (0, ") + what + " / 4]");
  }
}

}  // namespace

ReferencePath make_circle(double radius, Direction direction, const SpeedProfile& profile,
                          double spacing) {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw std::invalid_argument("circle radius must be positive");
  }
  check_spacing(spacing, radius / 4.0, "radius");
  const double circumference = kTwoPi * radius;
  const auto count = static_cast<std::size_t>(std::ceil(circumference / spacing - 1e-9));
  const double sign = direction == Direction::kCounterClockwise ? 1.0 : -1.0;

  std::vector<ReferenceSample> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double phi = kTwoPi * static_cast<double>(i) / static_cast<double>(count);
    ReferenceSample r;
    r.x = radius * std::sin(phi);
    r.y = sign * radius * (1.0 - std::cos(phi));
    r.theta = wrap_angle(sign * phi);
    r.s = radius * phi;
    r.v = profile.speed_at(r.s, circumference, true);
    samples.push_back(r);
  }
  std::ostringstream name;
  name << "circle_r" << radius << (sign > 0 ? "_ccw" : "_cw");
  return ReferencePath(std::move(samples), true, name.str());
}

ReferencePath make_line(double length, const SpeedProfile& profile, double spacing) {
  if (!(length > 0.0) || !std::isfinite(length)) {
    throw std::invalid_argument("line length must be positive");
  }
  check_spacing(spacing, length / 4.0, "length");
  const auto segments = static_cast<std::size_t>(std::ceil(length / spacing - 1e-9));
  std::vector<ReferenceSample> samples;
  samples.reserve(segments + 1);
  for (std::size_t i = 0; i <= segments; ++i) {
    ReferenceSample r;
    r.s = length * static_cast<double>(i) / static_cast<double>(segments);
    r.x = r.s;
    r.v = profile.speed_at(r.s, length, false);
    samples.push_back(r);
  }
  std::ostringstream name;
  name << "line_" << length;
  return ReferencePath(std::move(samples), false, name.str());
}

namespace {

struct DensePoint {
  Eigen::Vector2d position;
  double heading = 0.0;
};

// Densely sampled course part; `corner` marks fillets.
struct Part {
  std::vector<DensePoint> points;
  bool corner = false;
};

Part sample_straight(const Eigen::Vector2d& a, const Eigen::Vector2d& dir, double length,
                     std::size_t count) {
  Part part;
  const double heading = std::atan2(dir.y(), dir.x());
  for (std::size_t k = 0; k <= count; ++k) {
    const double t = length * static_cast<double>(k) / static_cast<double>(count);
    part.points.push_back({a + t * dir, heading});
  }
  return part;
}

Part sample_sinusoid(const Eigen::Vector2d& a, const Eigen::Vector2d& dir,
                     const Eigen::Vector2d& outward, double length, double amplitude,
                     double periods, std::size_t count) {
  Part part;
  const double omega = kTwoPi * periods / length;
  for (std::size_t k = 0; k <= count; ++k) {
    const double t = length * static_cast<double>(k) / static_cast<double>(count);
    const double lateral = 0.5 * amplitude * (1.0 - std::cos(omega * t));
    const double slope = 0.5 * amplitude * omega * std::sin(omega * t);
    const Eigen::Vector2d tangent = dir + slope * outward;
    part.points.push_back({a + t * dir + lateral * outward, std::atan2(tangent.y(), tangent.x())});
  }
  return part;
}

Part sample_arc(const Eigen::Vector2d& a, const Eigen::Vector2d& dir,
                const Eigen::Vector2d& outward, double length, double sagitta, std::size_t count) {
  if (!(sagitta > 0.0) || !(sagitta < 0.5 * length)) {
    throw std::invalid_argument("arc sagitta must lie in (0, chord / 2)");
  }
  const double radius = (0.25 * length * length + sagitta * sagitta) / (2.0 * sagitta);
  const Eigen::Vector2d mid = a + 0.5 * length * dir;
  const Eigen::Vector2d center = mid - (radius - sagitta) * outward;
  const double spin = cross(dir, center - mid) > 0.0 ? 1.0 : -1.0;  // +1: center on the left
  const Eigen::Vector2d from_center = a - center;
  const double start_angle = std::atan2(from_center.y(), from_center.x());
  const double sweep = 2.0 * std::asin(0.5 * length / radius);

  Part part;
  for (std::size_t k = 0; k <= count; ++k) {
    const double angle = start_angle + spin * sweep * static_cast<double>(k) / static_cast<double>(count);
    const Eigen::Vector2d point = center + radius * Eigen::Vector2d(std::cos(angle), std::sin(angle));
    part.points.push_back({point, wrap_angle(angle + spin * std::numbers::pi / 2.0)});
  }
  return part;
}

// Cubic Bezier joining two tangent-continuous end points; approximates a circular
// fillet when the end points are symmetric about the corner.
Part sample_fillet(const DensePoint& from, const DensePoint& to, std::size_t count) {
  const Eigen::Vector2d t0(std::cos(from.heading), std::sin(from.heading));
  const Eigen::Vector2d t1(std::cos(to.heading), std::sin(to.heading));
  const double chord = (to.position - from.position).norm();
  const double turn = std::abs(wrap_angle(to.heading - from.heading));
  double handle = chord / 3.0;
  if (turn > 1e-9) {
    const double radius = chord / (2.0 * std::sin(0.5 * turn));
    handle = 4.0 / 3.0 * std::tan(0.25 * turn) * radius;
  }
  const Eigen::Vector2d p0 = from.position;
  const Eigen::Vector2d p1 = from.position + handle * t0;
  const Eigen::Vector2d p2 = to.position - handle * t1;
  const Eigen::Vector2d p3 = to.position;

  Part part;
  part.corner = true;
  for (std::size_t k = 0; k <= count; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(count);
    const double u = 1.0 - t;
    const Eigen::Vector2d point =
        u * u * u * p0 + 3.0 * u * u * t * p1 + 3.0 * u * t * t * p2 + t * t * t * p3;
    const Eigen::Vector2d tangent =
        3.0 * u * u * (p1 - p0) + 6.0 * u * t * (p2 - p1) + 3.0 * t * t * (p3 - p2);
    const double heading = tangent.norm() > 1e-12 ? std::atan2(tangent.y(), tangent.x())
                                                  : (k == 0 ? from.heading : to.heading);
    part.points.push_back({point, heading});
  }
  return part;
}

}  // namespace

ReferencePath make_course(const std::vector<Eigen::Vector2d>& waypoints,
                          const std::vector<SegmentShape>& shapes, const SpeedProfile& profile,
                          const CourseOptions& options) {
  const std::size_t n = waypoints.size();
  if (n < 3) throw std::invalid_argument("a closed course needs at least 3 waypoints");
  if (shapes.size() != n) throw std::invalid_argument("need exactly one shape per course segment");
  if (!(options.corner_radius > 0.0)) {
    throw std::invalid_argument("corner radius must be positive; sharp corners are not drivable");
  }
  if (!(options.spacing > 0.0)) throw std::invalid_argument("course spacing must be positive");

  double area = 0.0;
  for (std::size_t i = 0; i < n; ++i) area += cross(waypoints[i], waypoints[(i + 1) % n]);
  if (std::abs(area) < 1e-9) throw std::invalid_argument("course waypoints enclose no area");
  const bool counter_clockwise = area > 0.0;

  std::vector<Eigen::Vector2d> dirs(n);
  std::vector<double> chord(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d delta = waypoints[(i + 1) % n] - waypoints[i];
    chord[i] = delta.norm();
    if (chord[i] < 1e-9) throw std::invalid_argument("duplicate consecutive course waypoints");
    dirs[i] = delta / chord[i];
  }
  // trim[j]: distance cut from both segments meeting at waypoint j.
  std::vector<double> trim(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Eigen::Vector2d& in = dirs[(j + n - 1) % n];
    const Eigen::Vector2d& out = dirs[j];
    const double turn = std::atan2(cross(in, out), in.dot(out));
    if (std::abs(turn) > std::numbers::pi - 1e-6) {
      throw std::invalid_argument("course reverses direction at waypoint " + std::to_string(j));
    }
    trim[j] = options.corner_radius * std::tan(0.5 * std::abs(turn));
  }

  const double fine = options.spacing / 10.0;
  std::vector<Part> parts;
  for (std::size_t i = 0; i < n; ++i) {
    const double interior = chord[i] - trim[i] - trim[(i + 1) % n];
    if (!(interior > fine)) {
      throw std::invalid_argument("corner radius too large for course segment " + std::to_string(i));
    }
    const Eigen::Vector2d start = waypoints[i] + trim[i] * dirs[i];
    const Eigen::Vector2d outward = counter_clockwise ? Eigen::Vector2d(dirs[i].y(), -dirs[i].x())
                                                      : Eigen::Vector2d(-dirs[i].y(), dirs[i].x());
    const auto count = static_cast<std::size_t>(std::ceil(interior / fine));
    switch (shapes[i]) {
      case SegmentShape::kStraight:
        parts.push_back(sample_straight(start, dirs[i], interior, count));
        break;
      case SegmentShape::kSinusoid:
        parts.push_back(sample_sinusoid(start, dirs[i], outward, interior,
                                        options.sinusoid_amplitude, options.sinusoid_periods,
                                        count));
        break;
      case SegmentShape::kArc:
        parts.push_back(sample_arc(start, dirs[i], outward, interior, options.arc_sagitta,
                                   count * 2));
        break;
    }
  }
  // Fillet after each segment, joining it to the next one.
  std::vector<Part> ordered;
  const DensePoint first = parts.front().points.front();
  for (std::size_t i = 0; i < n; ++i) {
    const DensePoint from = parts[i].points.back();
    const DensePoint to = i + 1 < n ? parts[i + 1].points.front() : first;
    ordered.push_back(std::move(parts[i]));
    if ((to.position - from.position).norm() > 1e-9) {
      const double estimate = (to.position - from.position).norm() * 1.2;
      const auto count = static_cast<std::size_t>(std::ceil(estimate / fine)) + 8;
      ordered.push_back(sample_fillet(from, to, count));
    }
  }

  // Concatenate; drop the duplicated junction points and the closing point.
  std::vector<DensePoint> dense;
  std::vector<std::pair<double, bool>> part_ends;  // (arc length at part end, part is corner)
  std::vector<double> cumulative;
  for (std::size_t p = 0; p < ordered.size(); ++p) {
    const auto& points = ordered[p].points;
    for (std::size_t k = (p == 0 ? 0 : 1); k < points.size(); ++k) {
      if (p + 1 == ordered.size() && k + 1 == points.size()) break;
      const double step = dense.empty() ? 0.0 : (points[k].position - dense.back().position).norm();
      cumulative.push_back(cumulative.empty() ? 0.0 : cumulative.back() + step);
      dense.push_back(points[k]);
    }
    part_ends.emplace_back(cumulative.back(), ordered[p].corner);
  }
  const double total = cumulative.back() + (dense.front().position - dense.back().position).norm();
  part_ends.back().first = total;

  // Per-part speeds when corners get their own speed.
  std::optional<SpeedProfile> course_profile;
  if (options.corner_speed) {
    std::vector<SpeedProfile::Interval> intervals;
    double begin = 0.0;
    for (const auto& [end, corner] : part_ends) {
      const double speed = corner ? *options.corner_speed
                                  : profile.speed_at(0.5 * (begin + end), total, true);
      if (!intervals.empty() && intervals.back().speed == speed) {
        intervals.back().end = end;
      } else {
        intervals.push_back({end, speed});
      }
      begin = end;
    }
    course_profile.emplace(std::move(intervals), profile.ramp_length(), false);
  }
  const SpeedProfile& speeds = course_profile ? *course_profile : profile;

  const auto count = static_cast<std::size_t>(std::ceil(total / options.spacing - 1e-9));
  const double step = total / static_cast<double>(count);
  std::vector<ReferenceSample> samples;
  samples.reserve(count);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double s = step * static_cast<double>(k);
    while (seg + 1 < cumulative.size() && cumulative[seg + 1] <= s) ++seg;
    const DensePoint& a = dense[seg];
    const DensePoint& b = dense[(seg + 1) % dense.size()];
    const double seg_end = seg + 1 < cumulative.size() ? cumulative[seg + 1] : total;
    const double span = seg_end - cumulative[seg];
    const double w = span > 0.0 ? (s - cumulative[seg]) / span : 0.0;
    ReferenceSample r;
    r.x = a.position.x() + w * (b.position.x() - a.position.x());
    r.y = a.position.y() + w * (b.position.y() - a.position.y());
    r.theta = wrap_angle(a.heading + w * wrap_angle(b.heading - a.heading));
    r.s = s;
    r.v = speeds.speed_at(s, total, true);
    samples.push_back(r);
  }

  ReferencePath path(std::move(samples), true, "course");
  if (self_intersects(path)) {
    throw std::runtime_error("generated course intersects itself; adjust corner radius or shapes");
  }
  return path;
}

ReferencePath make_evaluation_course(const SpeedProfile& profile, const CourseOptions& options) {
  const std::vector<Eigen::Vector2d> waypoints = {{0.0, 0.0}, {72.0, 0.0}, {72.0, 34.0}, {0.0, 34.0}};
  const std::vector<SegmentShape> shapes = {SegmentShape::kStraight, SegmentShape::kSinusoid,
                                            SegmentShape::kStraight, SegmentShape::kArc};
  return make_course(waypoints, shapes, profile, options);
}

namespace {

double orientation(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  return cross(b - a, c - a);
}

bool segments_cross(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                    const Eigen::Vector2d& q1, const Eigen::Vector2d& q2) {
  if (std::max(p1.x(), p2.x()) < std::min(q1.x(), q2.x()) ||
      std::max(q1.x(), q2.x()) < std::min(p1.x(), p2.x()) ||
      std::max(p1.y(), p2.y()) < std::min(q1.y(), q2.y()) ||
      std::max(q1.y(), q2.y()) < std::min(p1.y(), p2.y())) {
    return false;
  }
  const double d1 = orientation(q1, q2, p1);
  const double d2 = orientation(q1, q2, p2);
  const double d3 = orientation(p1, p2, q1);
  const double d4 = orientation(p1, p2, q2);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 &&
         d4 != 0;
}

}  // namespace

bool self_intersects(const ReferencePath& path) {
  const std::size_t n = path.size();
  const std::size_t segments = path.closed() ? n : n - 1;
  for (std::size_t i = 0; i < segments; ++i) {
    const Eigen::Vector2d a1 = path[i].position();
    const Eigen::Vector2d a2 = path[(i + 1) % n].position();
    for (std::size_t j = i + 2; j < segments; ++j) {
      if (path.closed() && i == 0 && j + 1 == segments) continue;  // adjacent through the seam
      if (segments_cross(a1, a2, path[j].position(), path[(j + 1) % n].position())) return true;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Queries

namespace {

// Squared distances within rounding of each other count as ties.
bool strictly_closer(double d, double best) { return d < best * (1.0 - 1e-12); }

}  // namespace

ClosestPoint closest_point(const ReferencePath& path, const Eigen::Vector2d& position) {
  std::size_t best = 0;
  double best_sq = (path[0].position() - position).squaredNorm();
  for (std::size_t i = 1; i < path.size(); ++i) {
    const double d = (path[i].position() - position).squaredNorm();
    if (strictly_closer(d, best_sq)) {
      best_sq = d;
      best = i;
    }
  }
  return {best, path[best], std::sqrt(best_sq)};
}

ClosestPoint closest_point_near(const ReferencePath& path, const Eigen::Vector2d& position,
                                std::size_t hint, std::size_t window) {
  const std::size_t n = path.size();
  if (2 * window + 1 >= n) return closest_point(path, position);
  hint %= n;
  std::size_t best = hint;
  double best_sq = (path[hint].position() - position).squaredNorm();
  auto consider = [&](std::size_t i) {
    const double d = (path[i].position() - position).squaredNorm();
    if (strictly_closer(d, best_sq) || (!strictly_closer(best_sq, d) && i < best)) {
      best_sq = d;
      best = i;
    }
  };
  for (std::size_t k = 1; k <= window; ++k) {
    if (path.closed()) {
      consider((hint + k) % n);
      consider((hint + n - k) % n);
    } else {
      if (hint + k < n) consider(hint + k);
      if (hint >= k) consider(hint - k);
    }
  }
  return {best, path[best], std::sqrt(best_sq)};
}

std::vector<WindowPoint> reference_window(const ReferencePath& path, std::size_t start_index,
                                          std::size_t horizon, double dt) {
  if (start_index >= path.size()) throw std::out_of_range("reference window start index");
  std::vector<WindowPoint> window;
  window.reserve(horizon);
  double s = path[start_index].s;
  std::size_t index = start_index;
  for (std::size_t k = 0; k < horizon; ++k) {
    window.push_back({index, path[index], path.curvature(index)});
    s += path[index].v * dt;
    if (!path.closed()) s = std::min(s, path.samples().back().s);
    index = path.index_at(s);
  }
  return window;
}

// ---------------------------------------------------------------------------
// CSV

void write_path_csv(const ReferencePath& path, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open '" + file.string() + "' for writing");
  out << "x,y,theta,v,s\n";
  for (const ReferenceSample& r : path.samples()) {
    out << csv::join({csv::format(r.x), csv::format(r.y), csv::format(r.theta), csv::format(r.v),
                      csv::format(r.s)})
        << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + file.string() + "'");
}

ReferencePath read_path_csv(const std::filesystem::path& file, std::optional<bool> closed) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open path file '" + file.string() + "'");
  std::string line;
  if (!std::getline(in, line) || csv::trim_line(line) != "x,y,theta,v,s") {
    throw std::runtime_error(file.string() + ":1: expected header 'x,y,theta,v,s'");
  }
  std::vector<ReferenceSample> samples;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = csv::trim_line(line);
    if (view.empty()) continue;
    const auto fields = csv::split(view);
    if (fields.size() != 5) {
      throw std::runtime_error(file.string() + ":" + std::to_string(line_no) + ": expected 5 fields");
    }
    try {
      samples.push_back({csv::parse_double(fields[0]), csv::parse_double(fields[1]),
                         csv::parse_double(fields[2]), csv::parse_double(fields[3]),
                         csv::parse_double(fields[4])});
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (samples.size() < 2) throw std::runtime_error(file.string() + ": fewer than 2 samples");
  if (!closed) {
    double gap = 0.0;
    for (std::size_t i = 1; i < samples.size(); ++i) {
      gap = std::max(gap, (samples[i].position() - samples[i - 1].position()).norm());
    }
    closed = (samples.back().position() - samples.front().position()).norm() <= 2.0 * gap;
  }
  return ReferencePath(std::move(samples), *closed, file.stem().string());
}

}  // namespace zst
