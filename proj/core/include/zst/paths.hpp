#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace zst {

/// One discretized point of a reference trajectory.
struct ReferenceSample {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  ///< path tangent, (-pi, pi]
  double v = 0.0;      ///< target speed, m/s
  double s = 0.0;      ///< cumulative arc length, m

  Eigen::Vector2d position() const { return {x, y}; }
  bool operator==(const ReferenceSample&) const = default;
};

/// Piecewise-constant target speed over arc length with linear ramps.
///
/// Ramps always sit on the faster side of a speed change, so the slower
/// interval holds its speed over its full extent.
class SpeedProfile {
 public:
  struct Interval {
    double end = 1.0;  ///< upper bound, either a fraction of the length or meters
    double speed = 1.0;
  };

  static SpeedProfile constant(double speed);
  /// First half at `first`, second half at `second`.
  static SpeedProfile halves(double first, double second, double ramp_length);

  /// `fractional` selects whether interval ends are fractions of the path length or meters.
  SpeedProfile(std::vector<Interval> intervals, double ramp_length, bool fractional = true);

  double speed_at(double s, double total_length, bool closed) const;

  const std::vector<Interval>& intervals() const { return intervals_; }
  double ramp_length() const { return ramp_; }
  bool fractional() const { return fractional_; }
  bool is_constant() const;

 private:
  std::vector<Interval> intervals_;
  double ramp_ = 0.0;
  bool fractional_ = true;
};

/// Immutable discretized reference trajectory.
class ReferencePath {
 public:
  /// Throws std::invalid_argument for fewer than two samples, non-finite values or
  /// non-increasing arc length.
  ReferencePath(std::vector<ReferenceSample> samples, bool closed, std::string name = {});

  std::size_t size() const { return samples_.size(); }
  const ReferenceSample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<ReferenceSample>& samples() const { return samples_; }
  bool closed() const { return closed_; }
  const std::string& name() const { return name_; }

  /// Total arc length; includes the closing gap on loops.
  double length() const { return length_; }
  /// Signed curvature at sample i, 1/m, from central heading differences.
  double curvature(std::size_t i) const { return curvature_[i]; }
  /// Largest distance between consecutive samples, including the closing gap on loops.
  double max_gap() const;

  /// Sample whose arc length is nearest to s; wraps on loops and clamps on open paths.
  std::size_t index_at(double s) const;

  /// Arc-length distance travelled going from sample `from` to sample `to` in the
  /// direction of travel (modulo length on loops).
  double advance(std::size_t from, std::size_t to) const;

 private:
  std::vector<ReferenceSample> samples_;
  std::vector<double> curvature_;
  bool closed_ = false;
  double length_ = 0.0;
  std::string name_;
};

enum class Direction { kClockwise, kCounterClockwise };

inline constexpr double kDefaultSpacing = 0.1;

/// Closed circle starting at the origin heading +x. Spacing must lie in (0, radius / 4].
ReferencePath make_circle(double radius, Direction direction, const SpeedProfile& profile,
                          double spacing = kDefaultSpacing);

/// Open straight line along +x from the origin. Spacing must lie in (0, length / 4].
ReferencePath make_line(double length, const SpeedProfile& profile,
                        double spacing = kDefaultSpacing);

enum class SegmentShape { kStraight, kSinusoid, kArc };

struct CourseOptions {
  double corner_radius = 5.0;       ///< fillet radius at every waypoint, m
  double sinusoid_amplitude = 2.0;  ///< peak lateral offset of a sinusoid segment, m
  double sinusoid_periods = 2.0;    ///< full periods per sinusoid segment
  double arc_sagitta = 3.0;         ///< outward bulge of an arc segment at mid-chord, m
  double spacing = kDefaultSpacing;
  /// When set, rounded corners use this speed and the profile applies elsewhere.
  std::optional<double> corner_speed;
};

/// Closed loop through the waypoints. shapes[i] describes the segment from
/// waypoint i to waypoint i + 1 (the last one closes the loop). Sample 0 sits at
/// the end of the corner rounding at waypoint 0.
///
/// Throws std::invalid_argument on bad arguments (including a non-positive corner
/// radius) and std::runtime_error when the generated loop intersects itself.
ReferencePath make_course(const std::vector<Eigen::Vector2d>& waypoints,
                          const std::vector<SegmentShape>& shapes, const SpeedProfile& profile,
                          const CourseOptions& options = {});

/// The rectangular evaluation loop: 72 x 34 m, counter-clockwise, one width as a
/// sinusoid and the opposite width as an outward arc.
ReferencePath make_evaluation_course(const SpeedProfile& profile,
                                     const CourseOptions& options = {});

/// True when two non-adjacent polyline segments of the path cross.
bool self_intersects(const ReferencePath& path);

struct ClosestPoint {
  std::size_t index = 0;
  ReferenceSample sample;
  double distance = 0.0;
};

/// Exhaustive nearest-sample search. Ties go to the smallest index.
ClosestPoint closest_point(const ReferencePath& path, const Eigen::Vector2d& position);

/// Nearest sample within `window` samples of `hint` (wrapping on loops).
ClosestPoint closest_point_near(const ReferencePath& path, const Eigen::Vector2d& position,
                                std::size_t hint, std::size_t window = 50);

struct WindowPoint {
  std::size_t index = 0;
  ReferenceSample sample;
  double curvature = 0.0;
};

/// `horizon` samples starting at `start_index`, advancing by v_r * dt of arc length
/// per step. Wraps on loops and repeats the final sample on open paths.
std::vector<WindowPoint> reference_window(const ReferencePath& path, std::size_t start_index,
                                          std::size_t horizon, double dt);

/// CSV with header `x,y,theta,v,s`.
void write_path_csv(const ReferencePath& path, const std::filesystem::path& file);
/// Reads the CSV written by write_path_csv. When `closed` is empty the path is
/// treated as a loop if its end points are within twice the largest sample gap.
ReferencePath read_path_csv(const std::filesystem::path& file,
                            std::optional<bool> closed = std::nullopt);

}  // namespace zst
