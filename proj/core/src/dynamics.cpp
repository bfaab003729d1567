#include "zst/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace zst {

double wrap_angle(double angle) {
  constexpr double kPi = std::numbers::pi;
  if (angle > -kPi && angle <= kPi) return angle;
  double wrapped = std::remainder(angle, 2.0 * kPi);  // [-pi, pi]
  if (wrapped <= -kPi) wrapped += 2.0 * kPi;
  return wrapped;
}

VehicleState VehicleState::from_vector(const Eigen::Vector4d& q) {
  return {q[0], q[1], wrap_angle(q[2]), std::max(0.0, q[3])};
}

Command::Command(double steering, double throttle)
    : steering_(std::clamp(steering, -1.0, 1.0)), throttle_(std::clamp(throttle, 0.0, 1.0)) {
  if (std::isnan(steering)) steering_ = 0.0;
  if (std::isnan(throttle)) throttle_ = 0.0;
}

double VehicleParams::max_curvature() const { return std::tan(beta) / wheelbase_l; }

void VehicleParams::validate() const {
  auto require_positive = [](double value, const char* name) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw std::invalid_argument(std::string("vehicle parameter '") + name +
                                  "' must be positive and finite");
    }
  };
  require_positive(beta, "beta");
  require_positive(wheelbase_l, "wheelbase_l");
  require_positive(gear_ratio_gamma, "gear_ratio_gamma");
  require_positive(wheel_radius_Rw, "wheel_radius_Rw");
  require_positive(wheel_inertia_Iw, "wheel_inertia_Iw");
  require_positive(torque_stall, "torque_stall");
  require_positive(speed_noload, "speed_noload");
  if (beta >= std::numbers::pi / 2.0) {
    throw std::invalid_argument("vehicle parameter 'beta' must be below pi/2");
  }
}

double torque(double alpha, double v, const VehicleParams& p) {
  return alpha * p.torque_stall * std::max(0.0, 1.0 - v / p.speed_noload);
}

double torque_speed_slope(double alpha, double v, const VehicleParams& p) {
  if (v >= p.speed_noload) return 0.0;
  return -alpha * p.torque_stall / p.speed_noload;
}

StateDerivative derivatives(const Eigen::Vector4d& q, const Command& u, const VehicleParams& p) {
  const double theta = q[2];
  const double v = q[3];
  return {v * std::cos(theta), v * std::sin(theta),
          v * std::tan(p.beta * u.steering()) / p.wheelbase_l,
          torque(u.throttle(), v, p) * p.accel_per_torque()};
}

StateDerivative derivatives(const VehicleState& q, const Command& u, const VehicleParams& p) {
  return derivatives(q.as_vector(), u, p);
}

Eigen::Matrix4d state_jacobian(const Eigen::Vector4d& q, const Command& u,
                               const VehicleParams& p) {
  const double theta = q[2];
  const double v = q[3];
  Eigen::Matrix4d jac = Eigen::Matrix4d::Zero();
  jac(0, 2) = -v * std::sin(theta);
  jac(0, 3) = std::cos(theta);
  jac(1, 2) = v * std::cos(theta);
  jac(1, 3) = std::sin(theta);
  jac(2, 3) = std::tan(p.beta * u.steering()) / p.wheelbase_l;
  jac(3, 3) = torque_speed_slope(u.throttle(), v, p) * p.accel_per_torque();
  return jac;
}

namespace {

void check_step(double dt) {
  if (!(dt > 0.0) || dt > kMaxStep) {
    throw std::invalid_argument("integration step must lie in (0, " + std::to_string(kMaxStep) +
                                "], got " + std::to_string(dt));
  }
}

}  // namespace

VehicleState step(const VehicleState& q, const Command& u, double dt, const VehicleParams& p) {
  check_step(dt);
  const Eigen::Vector4d q0 = q.as_vector();
  const Eigen::Vector4d k1 = derivatives(q0, u, p);
  const Eigen::Vector4d k2 = derivatives(Eigen::Vector4d(q0 + 0.5 * dt * k1), u, p);
  const Eigen::Vector4d k3 = derivatives(Eigen::Vector4d(q0 + 0.5 * dt * k2), u, p);
  const Eigen::Vector4d k4 = derivatives(Eigen::Vector4d(q0 + dt * k3), u, p);
  const Eigen::Vector4d q1 = q0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return VehicleState::from_vector(q1);
}

Eigen::Matrix4d step_jacobian(const VehicleState& q, const Command& u, double dt,
                              const VehicleParams& p) {
  check_step(dt);
  const Eigen::Matrix4d eye = Eigen::Matrix4d::Identity();
  const Eigen::Vector4d q0 = q.as_vector();
  const Eigen::Vector4d k1 = derivatives(q0, u, p);
  const Eigen::Vector4d q1 = q0 + 0.5 * dt * k1;
  const Eigen::Vector4d k2 = derivatives(q1, u, p);
  const Eigen::Vector4d q2 = q0 + 0.5 * dt * k2;
  const Eigen::Vector4d k3 = derivatives(q2, u, p);
  const Eigen::Vector4d q3 = q0 + dt * k3;

  // Chain rule through the stages: dk_i/dq0.
  const Eigen::Matrix4d d1 = state_jacobian(q0, u, p);
  const Eigen::Matrix4d d2 = state_jacobian(q1, u, p) * (eye + 0.5 * dt * d1);
  const Eigen::Matrix4d d3 = state_jacobian(q2, u, p) * (eye + 0.5 * dt * d2);
  const Eigen::Matrix4d d4 = state_jacobian(q3, u, p) * (eye + dt * d3);
  return eye + (dt / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
}

}  // namespace zst
