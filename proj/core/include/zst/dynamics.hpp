#pragma once

#include <Eigen/Core>

namespace zst {

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

/// 4-DOF vehicle state [x, y, theta, v] in local planar meters.
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  ///< heading, radians, (-pi, pi]
  double v = 0.0;      ///< longitudinal speed, m/s, never negative

  Eigen::Vector4d as_vector() const { return {x, y, theta, v}; }
  static VehicleState from_vector(const Eigen::Vector4d& q);

  bool operator==(const VehicleState&) const = default;
};

/// Actuator command. Both channels are clamped on construction.
class Command {
 public:
  Command() = default;
  Command(double steering, double throttle);

  double steering() const { return steering_; }
  double throttle() const { return throttle_; }

  Eigen::Vector2d as_vector() const { return {steering_, throttle_}; }

  bool operator==(const Command&) const = default;

 private:
  double steering_ = 0.0;  // [-1, 1]
  double throttle_ = 0.0;  // [0, 1]
};

/// Physical parameters of the 4-DOF model.
///
/// The motor map is affine in speed: T(a, v) = a * torque_stall * (1 - v / speed_noload),
/// floored at zero. The defaults reach 2 m/s from rest in about 3 s at full throttle.
struct VehicleParams {
  double beta = 0.4;               ///< rad of wheel angle per unit steering command
  double wheelbase_l = 0.5;        ///< m
  double gear_ratio_gamma = 0.25;  ///< dimensionless
  double wheel_radius_Rw = 0.08;   ///< m
  double wheel_inertia_Iw = 0.01175;  ///< kg m^2
  double torque_stall = 0.5;       ///< N m at a = 1, v = 0
  double speed_noload = 5.0;       ///< m/s where torque vanishes at a = 1

  /// Longitudinal acceleration per unit torque, gamma * Rw / Iw.
  double accel_per_torque() const { return gear_ratio_gamma * wheel_radius_Rw / wheel_inertia_Iw; }

  /// Largest curvature reachable with |steering| <= 1.
  double max_curvature() const;

  /// Throws std::invalid_argument when a parameter is non-positive or beta >= pi/2.
  void validate() const;
};

using StateDerivative = Eigen::Vector4d;

/// Motor torque T(alpha, v), N m.
double torque(double alpha, double v, const VehicleParams& p);

/// dT/dv at (alpha, v); zero beyond the no-load speed.
double torque_speed_slope(double alpha, double v, const VehicleParams& p);

/// Continuous-time model f(q, u) = [v cos th, v sin th, v tan(beta d) / l, T gamma Rw / Iw].
StateDerivative derivatives(const VehicleState& q, const Command& u, const VehicleParams& p);

/// Same as derivatives() on a raw vector; theta is not wrapped and v is not clamped.
StateDerivative derivatives(const Eigen::Vector4d& q, const Command& u, const VehicleParams& p);

/// Jacobian of f with respect to the state, evaluated at q.
Eigen::Matrix4d state_jacobian(const Eigen::Vector4d& q, const Command& u, const VehicleParams& p);

/// Largest accepted integration step, seconds.
inline constexpr double kMaxStep = 0.1;

/// One classical RK4 step with the command held over dt. Re-wraps theta and clamps v at 0.
/// Throws std::invalid_argument unless dt is in (0, kMaxStep].
VehicleState step(const VehicleState& q, const Command& u, double dt, const VehicleParams& p);

/// Jacobian of the unwrapped, unclamped RK4 map q -> step(q) at q.
Eigen::Matrix4d step_jacobian(const VehicleState& q, const Command& u, double dt,
                              const VehicleParams& p);

}  // namespace zst
