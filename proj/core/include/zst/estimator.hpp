#pragma once

#include <Eigen/Core>

#include "zst/dynamics.hpp"

namespace zst {

struct NoiseConfig {
  /// Continuous process noise density; the discrete covariance is process * dt.
  Eigen::Matrix4d process = Eigen::Vector4d(1e-4, 1e-4, 1e-4, 1e-3).asDiagonal();
  /// Position measurement covariance, m^2 (sigma 0.02 m).
  Eigen::Matrix2d position = Eigen::Vector2d(4e-4, 4e-4).asDiagonal();
  /// Heading measurement variance, rad^2 (sigma 0.01 rad).
  double heading = 1e-4;

  void validate() const;
};

struct EkfDiagnostics {
  Eigen::Vector2d position_innovation = Eigen::Vector2d::Zero();
  double heading_innovation = 0.0;
};

/// Filter mean and covariance. One instance per vehicle.
struct EkfState {
  VehicleState mean;
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();
  EkfDiagnostics diagnostics;
};

/// Propagates the mean with dynamics::step and the covariance with F P F' + Q dt.
EkfState ekf_predict(const EkfState& s, const Command& u, double dt, const VehicleParams& p,
                     const NoiseConfig& n);

/// Kalman update on a measured (x, y). Throws std::invalid_argument for non-finite input.
EkfState ekf_update_position(const EkfState& s, const Eigen::Vector2d& measurement,
                             const NoiseConfig& n);

/// Kalman update on a measured heading; the innovation is wrapped to (-pi, pi].
EkfState ekf_update_heading(const EkfState& s, double measurement, const NoiseConfig& n);

}  // namespace zst
