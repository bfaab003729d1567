#include "zst/estimator.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace zst {

namespace {

template <int N>
void require_psd(const Eigen::Matrix<double, N, N>& m, const char* what) {
  if (!m.allFinite() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument(std::string(what) + " must be finite and symmetric");
  }
  if (Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>>(m).eigenvalues().minCoeff() <
      -1e-12) {
    throw std::invalid_argument(std::string(what) + " must be positive semi-definite");
  }
}

Eigen::Matrix4d symmetrize(const Eigen::Matrix4d& m) { return 0.5 * (m + m.transpose()); }

// Joseph-form covariance update; keeps P symmetric PSD under rounding.
template <int M>
Eigen::Matrix4d joseph(const Eigen::Matrix4d& P, const Eigen::Matrix<double, 4, M>& K,
                       const Eigen::Matrix<double, M, 4>& H,
                       const Eigen::Matrix<double, M, M>& R) {
  const Eigen::Matrix4d I_KH = Eigen::Matrix4d::Identity() - K * H;
  return symmetrize(I_KH * P * I_KH.transpose() + K * R * K.transpose());
}

}  // namespace

void NoiseConfig::validate() const {
  require_psd<4>(process, "process noise");
  require_psd<2>(position, "position noise");
  if (!(heading >= 0.0) || !std::isfinite(heading)) {
    throw std::invalid_argument("heading noise must be finite and >= 0");
  }
}

EkfState ekf_predict(const EkfState& s, const Command& u, double dt, const VehicleParams& p,
                     const NoiseConfig& n) {
  // step() validates dt.
  EkfState out = s;
  out.mean = step(s.mean, u, dt, p);
  const Eigen::Matrix4d F = step_jacobian(s.mean, u, dt, p);
  out.covariance = symmetrize(F * s.covariance * F.transpose() + n.process * dt);
  return out;
}

EkfState ekf_update_position(const EkfState& s, const Eigen::Vector2d& measurement,
                             const NoiseConfig& n) {
  if (!measurement.allFinite()) throw std::invalid_argument("position measurement is not finite");
  Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
  H(0, 0) = 1.0;
  H(1, 1) = 1.0;
  const Eigen::Vector2d innovation = measurement - Eigen::Vector2d(s.mean.x, s.mean.y);
  const Eigen::Matrix2d S = H * s.covariance * H.transpose() + n.position;
  const Eigen::Matrix<double, 4, 2> K = s.covariance * H.transpose() * S.inverse();

  EkfState out = s;
  out.mean = VehicleState::from_vector(s.mean.as_vector() + K * innovation);
  out.covariance = joseph<2>(s.covariance, K, H, n.position);
  out.diagnostics.position_innovation = innovation;
  return out;
}

EkfState ekf_update_heading(const EkfState& s, double measurement, const NoiseConfig& n) {
  if (!std::isfinite(measurement)) throw std::invalid_argument("heading measurement is not finite");
  Eigen::Matrix<double, 1, 4> H = Eigen::Matrix<double, 1, 4>::Zero();
  H(0, 2) = 1.0;
  const double innovation = wrap_angle(measurement - s.mean.theta);
  const double S = s.covariance(2, 2) + n.heading;
  const Eigen::Matrix<double, 4, 1> K = s.covariance.col(2) / S;

  EkfState out = s;
  out.mean = VehicleState::from_vector(s.mean.as_vector() + K * innovation);
  out.covariance =
      joseph<1>(s.covariance, K, H, Eigen::Matrix<double, 1, 1>::Constant(n.heading));
  out.diagnostics.heading_innovation = innovation;
  return out;
}

}  // namespace zst
