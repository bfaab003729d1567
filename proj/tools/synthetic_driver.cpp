#include "synthetic_driver.hpp"

#include <algorithm>
#include <cmath>

namespace zst::tools {

SyntheticDriver::SyntheticDriver(const VehicleParams& params, DriverStyle style, std::uint64_t seed)
    : params_(params), style_(style), rng_(seed) {}

void SyntheticDriver::reset() {
  pending_.clear();
  steering_ = throttle_ = 0.0;
  started_ = false;
}

hil::CommandMessage SyntheticDriver::observe(const hil::StateBroadcast& b) {
  const double dt = started_ ? std::max(0.0, b.t - last_t_) : 0.0;
  started_ = true;
  last_t_ = b.t;

  // Aim at the first reference point beyond the preview distance.
  const double preview = std::max(style_.preview_min, style_.preview_per_speed * b.state.v);
  Eigen::Vector2d aim = b.ref.empty() ? Eigen::Vector2d(b.state.x, b.state.y) : b.ref.back();
  for (const auto& p : b.ref) {
    if (std::hypot(p.x() - b.state.x, p.y() - b.state.y) >= preview) {
      aim = p;
      break;
    }
  }
  const double dx = aim.x() - b.state.x, dy = aim.y() - b.state.y;
  const double dist = std::max(1e-3, std::hypot(dx, dy));
  const double alpha = wrap_angle(std::atan2(dy, dx) - b.state.theta);
  const double wheel = std::atan(2.0 * params_.wheelbase_l * std::sin(alpha) / dist);
  const double want_steer = style_.steering_gain * wheel / params_.beta;
  const double want_throttle = style_.speed_gain * std::max(0.0, b.v_ref - b.state.v);
  pending_.push_back({b.t, want_steer, want_throttle});

  // Act on the newest intent that is at least one reaction delay old.
  Intent act{b.t, 0.0, 0.0};
  bool have = false;
  while (!pending_.empty() && pending_.front().t <= b.t - style_.reaction_delay + 1e-9) {
    act = pending_.front();
    pending_.pop_front();
    have = true;
  }
  if (dt > 0.0) {
    const double decay = std::exp(-dt / style_.jitter_tau);
    const double kick = std::sqrt(1.0 - decay * decay);
    steer_noise_ = decay * steer_noise_ + kick * style_.steering_jitter * normal_(rng_);
    throttle_noise_ = decay * throttle_noise_ + kick * style_.throttle_jitter * normal_(rng_);
    if (have) {
      const double lag = 1.0 - std::exp(-dt / style_.steering_tau);
      const double target = steering_ + lag * (act.steering - steering_);
      const double limit = style_.steering_rate * dt;
      steering_ += std::clamp(target - steering_, -limit, limit);
      throttle_ = act.throttle;
    }
  }
  hil::CommandMessage m;
  m.steering = std::clamp(steering_ + steer_noise_, -1.0, 1.0);
  // Off the pedal once at speed; the plant has no brake to undo an overshoot.
  m.throttle = throttle_ > 0.0 ? std::clamp(throttle_ + throttle_noise_, 0.0, 1.0) : 0.0;
  m.client_time = b.t;
  return m;
}

void drive_all(hil::Session& session, const VehicleParams& params, double seconds,
               std::uint64_t seed, DriverStyle style) {
  session.client_connected();
  const auto trajectories = session.trajectories();
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    const hil::Trajectory& traj = trajectories[k];
    SyntheticDriver driver(params, style, seed + k);
    session.handle(hil::ControlMessage{hil::Action::kSelectTrajectory, traj.id});
    session.handle(hil::ControlMessage{hil::Action::kStartRecording, {}});
    const double t0 = session.time();
    while (session.time() - t0 < seconds - 1e-9) {
      const auto b = session.tick();
      if (!b) continue;
      if (!traj.path.closed() && b->progress > 0.98) break;
      session.handle(driver.observe(*b));
    }
    session.handle(hil::ControlMessage{hil::Action::kStopRecording, {}});
  }
  session.client_disconnected();
}

}  // namespace zst::tools
