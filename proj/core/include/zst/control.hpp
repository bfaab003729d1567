#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "zst/dynamics.hpp"
#include "zst/paths.hpp"

namespace zst {

/// Tracking error in the vehicle frame. e2 > 0 means the reference lies to the
/// vehicle's left.
struct ErrorState {
  double e1 = 0.0;  ///< longitudinal, m
  double e2 = 0.0;  ///< lateral, m
  double e3 = 0.0;  ///< heading, rad, (-pi, pi]
  double e4 = 0.0;  ///< speed, m/s

  Eigen::Vector4d as_vector() const { return {e1, e2, e3, e4}; }
  static ErrorState from_vector(const Eigen::Vector4d& e) { return {e[0], e[1], e[2], e[3]}; }
  bool operator==(const ErrorState&) const = default;
};

/// Rotates the world-frame offset to the reference into the vehicle frame.
ErrorState error_state(const VehicleState& q, const ReferenceSample& ref);

/// Error state against the sample `lookahead` meters of arc length past `closest`.
/// With lookahead 0 this is the error to the closest sample itself.
ErrorState lookahead_error(const ReferencePath& path, const VehicleState& q, std::size_t closest,
                           double lookahead);

/// Continuous error dynamics de/dt at (e, u) while the reference moves along a path
/// of curvature `curvature` with tangential acceleration `reference_accel`.
Eigen::Vector4d error_derivative(const Eigen::Vector4d& e, const Command& u,
                                 const ReferenceSample& ref, double curvature,
                                 double reference_accel, const VehicleParams& p);

/// Steady command that keeps the vehicle on the reference.
struct ReferenceCommand {
  double steering_r = 0.0;
  double throttle_r = 0.0;

  Eigen::Vector2d as_vector() const { return {steering_r, throttle_r}; }
  Command as_command() const { return {steering_r, throttle_r}; }
};

/// Inverts the bicycle model for steering; throttle_r = v_r / speed_noload.
/// Throws std::domain_error when the curvature is beyond the steering range.
ReferenceCommand reference_command(const ReferenceSample& ref, double path_curvature,
                                   const VehicleParams& p);

struct LinearizedDynamics {
  Eigen::Matrix4d A = Eigen::Matrix4d::Identity();
  Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::Zero();
};

/// Forward-Euler discretization of the analytic error Jacobians:
/// A = I + dt * d(de/dt)/de, B = dt * d(de/dt)/du.
LinearizedDynamics linearize(const ErrorState& e, const Command& u_bar, const ReferenceSample& ref,
                             double dt, const VehicleParams& p);

struct MpcConfig {
  std::size_t horizon_N = 20;
  double dt = 0.1;
  Eigen::Matrix4d Q = Eigen::Vector4d(1.0, 1.0, 0.5, 5.0).asDiagonal();
  Eigen::Matrix2d R = Eigen::Vector2d(0.1, 0.1).asDiagonal();

  /// Throws std::invalid_argument unless N >= 1, dt > 0, Q symmetric PSD, R symmetric PD.
  void validate() const;
};

/// Raised when the backward recursion breaks down.
class MpcSolveError : public std::runtime_error {
 public:
  MpcSolveError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " at horizon step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct MpcSolution {
  Command command;                              ///< first input, clamped to command bounds
  Eigen::Vector2d unclamped_input;              ///< u_r + du at k = 0 before clamping
  std::vector<Eigen::Vector2d> input_offsets;   ///< du_k = u_k - u_r,k for k < N
  std::vector<Eigen::Vector4d> predicted_errors;  ///< e_0 .. e_N
  double cost = 0.0;  ///< quadratic objective of the returned (unclamped) sequence
};

/// Finite-horizon tracking MPC solved with a backward Riccati pass over the
/// time-varying error model linearized along the reference window.
MpcSolution mpc_solve(const ErrorState& e0, const std::vector<WindowPoint>& refs,
                      const MpcConfig& config, const VehicleParams& p);

/// Objective e_N' Q e_N + sum_k e_k' Q e_k + du_k' R du_k of an input-offset sequence
/// rolled through the same linear model mpc_solve uses.
double mpc_cost(const ErrorState& e0, const std::vector<WindowPoint>& refs,
                const std::vector<Eigen::Vector2d>& input_offsets, const MpcConfig& config,
                const VehicleParams& p);

/// Closed-loop MPC tracker. Keeps the last closest-point index for warm starts, so
/// one instance drives one vehicle.
class MpcTracker {
 public:
  MpcTracker(const ReferencePath& path, MpcConfig config, VehicleParams params);

  /// Command for the (estimated) state; `closest` is the current closest-point index.
  MpcSolution act(const VehicleState& estimate, std::size_t closest) const;

  const MpcConfig& config() const { return config_; }

 private:
  const ReferencePath* path_;
  MpcConfig config_;
  VehicleParams params_;
};

}  // namespace zst
