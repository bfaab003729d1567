#include "zst/control.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace zst {

ErrorState error_state(const VehicleState& q, const ReferenceSample& ref) {
  const double c = std::cos(q.theta);
  const double s = std::sin(q.theta);
  const double dx = ref.x - q.x;
  const double dy = ref.y - q.y;
  return {c * dx + s * dy, -s * dx + c * dy, wrap_angle(ref.theta - q.theta), ref.v - q.v};
}

ErrorState lookahead_error(const ReferencePath& path, const VehicleState& q, std::size_t closest,
                           double lookahead) {
  if (lookahead <= 0.0) return error_state(q, path[closest]);
  return error_state(q, path[path.index_at(path[closest].s + lookahead)]);
}

Eigen::Vector4d error_derivative(const Eigen::Vector4d& e, const Command& u,
                                 const ReferenceSample& ref, double curvature,
                                 double reference_accel, const VehicleParams& p) {
  const double v = ref.v - e[3];
  const double yaw_rate = v * std::tan(p.beta * u.steering()) / p.wheelbase_l;
  return {yaw_rate * e[1] + ref.v * std::cos(e[2]) - v,
          -yaw_rate * e[0] + ref.v * std::sin(e[2]),
          ref.v * curvature - yaw_rate,
          reference_accel - torque(u.throttle(), v, p) * p.accel_per_torque()};
}

ReferenceCommand reference_command(const ReferenceSample& ref, double path_curvature,
                                   const VehicleParams& p) {
  const double wheel_angle = std::atan(path_curvature * p.wheelbase_l);
  if (std::abs(wheel_angle) > p.beta) {
    throw std::domain_error("path curvature " + std::to_string(path_curvature) +
                            " exceeds the steerable range " + std::to_string(p.max_curvature()));
  }
  return {wheel_angle / p.beta, std::clamp(ref.v / p.speed_noload, 0.0, 1.0)};
}

LinearizedDynamics linearize(const ErrorState& e, const Command& u_bar, const ReferenceSample& ref,
                             double dt, const VehicleParams& p) {
  const double v = ref.v - e.e4;
  const double steer_angle = p.beta * u_bar.steering();
  const double tan_steer = std::tan(steer_angle);
  const double cos_steer = std::cos(steer_angle);
  const double yaw_rate = v * tan_steer / p.wheelbase_l;
  const double yaw_rate_dv = tan_steer / p.wheelbase_l;  // d(yaw_rate)/dv
  const double yaw_rate_dsteer = v * p.beta / (p.wheelbase_l * cos_steer * cos_steer);
  const double k = p.accel_per_torque();

  Eigen::Matrix4d jac_e = Eigen::Matrix4d::Zero();
  // v = v_r - e4, so d/de4 carries a minus sign through v.
  jac_e(0, 1) = yaw_rate;
  jac_e(0, 2) = -ref.v * std::sin(e.e3);
  jac_e(0, 3) = 1.0 - yaw_rate_dv * e.e2;
  jac_e(1, 0) = -yaw_rate;
  jac_e(1, 2) = ref.v * std::cos(e.e3);
  jac_e(1, 3) = yaw_rate_dv * e.e1;
  jac_e(2, 3) = yaw_rate_dv;
  jac_e(3, 3) = k * torque_speed_slope(u_bar.throttle(), v, p);

  Eigen::Matrix<double, 4, 2> jac_u = Eigen::Matrix<double, 4, 2>::Zero();
  jac_u(0, 0) = yaw_rate_dsteer * e.e2;
  jac_u(1, 0) = -yaw_rate_dsteer * e.e1;
  jac_u(2, 0) = -yaw_rate_dsteer;
  jac_u(3, 1) = -k * p.torque_stall * std::max(0.0, 1.0 - v / p.speed_noload);

  LinearizedDynamics lin;
  lin.A = Eigen::Matrix4d::Identity() + dt * jac_e;
  lin.B = dt * jac_u;
  return lin;
}

void MpcConfig::validate() const {
  if (horizon_N < 1) throw std::invalid_argument("MPC horizon must be at least 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("MPC dt must be positive");
  if (!Q.allFinite() || (Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("MPC Q must be finite and symmetric");
  }
  const double q_min = Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(Q).eigenvalues().minCoeff();
  if (q_min < -1e-12) throw std::invalid_argument("MPC Q must be positive semi-definite");
  if (!R.allFinite() || (R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("MPC R must be finite and symmetric");
  }
  if (Eigen::LLT<Eigen::Matrix2d>(R).info() != Eigen::Success) {
    throw std::invalid_argument("MPC R must be positive definite");
  }
}

namespace {

struct HorizonModel {
  std::vector<LinearizedDynamics> stages;
  std::vector<Eigen::Vector2d> reference_inputs;
};

HorizonModel build_horizon(const std::vector<WindowPoint>& refs, const MpcConfig& config,
                           const VehicleParams& p) {
  if (refs.size() != config.horizon_N) {
    throw std::invalid_argument("MPC needs exactly N = " + std::to_string(config.horizon_N) +
                                " reference samples, got " + std::to_string(refs.size()));
  }
  HorizonModel model;
  model.stages.reserve(refs.size());
  model.reference_inputs.reserve(refs.size());
  for (const WindowPoint& ref : refs) {
    const ReferenceCommand u_r = reference_command(ref.sample, ref.curvature, p);
    model.reference_inputs.push_back(u_r.as_vector());
    model.stages.push_back(linearize(ErrorState{}, u_r.as_command(), ref.sample, config.dt, p));
  }
  return model;
}

double rollout_cost(const HorizonModel& model, const Eigen::Vector4d& e0,
                    const std::vector<Eigen::Vector2d>& offsets, const MpcConfig& config,
                    std::vector<Eigen::Vector4d>* trajectory) {
  Eigen::Vector4d e = e0;
  double cost = 0.0;
  if (trajectory) trajectory->push_back(e);
  for (std::size_t k = 0; k < model.stages.size(); ++k) {
    cost += e.dot(config.Q * e) + offsets[k].dot(config.R * offsets[k]);
    e = model.stages[k].A * e + model.stages[k].B * offsets[k];
    if (trajectory) trajectory->push_back(e);
  }
  return cost + e.dot(config.Q * e);
}

}  // namespace

MpcSolution mpc_solve(const ErrorState& e0, const std::vector<WindowPoint>& refs,
                      const MpcConfig& config, const VehicleParams& p) {
  config.validate();
  const HorizonModel model = build_horizon(refs, config, p);
  const std::size_t n = model.stages.size();

  std::vector<Eigen::Matrix<double, 2, 4>> gains(n);
  Eigen::Matrix4d cost_to_go = config.Q;
  for (std::size_t k = n; k-- > 0;) {
    const auto& A = model.stages[k].A;
    const auto& B = model.stages[k].B;
    const Eigen::Matrix2d S = config.R + B.transpose() * cost_to_go * B;
    const Eigen::LLT<Eigen::Matrix2d> llt(S);
    if (llt.info() != Eigen::Success) throw MpcSolveError("input Hessian not positive definite", k);
    gains[k] = llt.solve(B.transpose() * cost_to_go * A);
    cost_to_go = config.Q + A.transpose() * cost_to_go * (A - B * gains[k]);
    cost_to_go = 0.5 * (cost_to_go + cost_to_go.transpose()).eval();
    if (!cost_to_go.allFinite() || !gains[k].allFinite()) {
      throw MpcSolveError("non-finite Riccati iterate", k);
    }
  }

  MpcSolution solution;
  solution.input_offsets.reserve(n);
  Eigen::Vector4d e = e0.as_vector();
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Vector2d du = -gains[k] * e;
    solution.input_offsets.push_back(du);
    e = model.stages[k].A * e + model.stages[k].B * du;
  }
  solution.predicted_errors.reserve(n + 1);
  solution.cost = rollout_cost(model, e0.as_vector(), solution.input_offsets, config,
                               &solution.predicted_errors);
  solution.unclamped_input = model.reference_inputs.front() + solution.input_offsets.front();
  solution.command = Command(solution.unclamped_input[0], solution.unclamped_input[1]);
  return solution;
}

double mpc_cost(const ErrorState& e0, const std::vector<WindowPoint>& refs,
                const std::vector<Eigen::Vector2d>& input_offsets, const MpcConfig& config,
                const VehicleParams& p) {
  const HorizonModel model = build_horizon(refs, config, p);
  if (input_offsets.size() != model.stages.size()) {
    throw std::invalid_argument("input offset sequence length must equal the horizon");
  }
  return rollout_cost(model, e0.as_vector(), input_offsets, config, nullptr);
}

MpcTracker::MpcTracker(const ReferencePath& path, MpcConfig config, VehicleParams params)
    : path_(&path), config_(std::move(config)), params_(params) {
  config_.validate();
  params_.validate();
}

MpcSolution MpcTracker::act(const VehicleState& estimate, std::size_t closest) const {
  const auto refs = reference_window(*path_, closest, config_.horizon_N, config_.dt);
  return mpc_solve(error_state(estimate, refs.front().sample), refs, config_, params_);
}

}  // namespace zst
