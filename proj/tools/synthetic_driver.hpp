#pragma once

#include <cstdint>
#include <deque>
#include <random>

#include "zst/hilbridge.hpp"

namespace zst::tools {

/// Reaction and actuation characteristics of the scripted driver.
struct DriverStyle {
  double preview_min = 2.0;      ///< m
  double preview_per_speed = 1.5;  ///< s of travel looked ahead
  double steering_gain = 0.8;   ///< fraction of the geometric steering actually applied
  double reaction_delay = 0.2;   ///< s between seeing a state and acting on it
  double steering_tau = 0.5;    ///< s, first-order hand lag
  double steering_rate = 1.5;    ///< command units per second
  double steering_jitter = 0.02;
  double speed_gain = 0.5;       ///< throttle per m/s of speed deficit
  double throttle_jitter = 0.03;
  double jitter_tau = 1.5;       ///< s, correlation time of both jitters
};

/// Pure-pursuit style driver with lag, delay and slowly wandering errors. It sees
/// only what a browser client sees: the state broadcast.
class SyntheticDriver {
 public:
  SyntheticDriver(const VehicleParams& params, DriverStyle style, std::uint64_t seed);

  /// Feeds one broadcast received at sim time `b.t`; returns the command sent in reply.
  hil::CommandMessage observe(const hil::StateBroadcast& b);

  void reset();

 private:
  struct Intent {
    double t;
    double steering;
    double throttle;
  };

  VehicleParams params_;
  DriverStyle style_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::deque<Intent> pending_;
  double steering_ = 0.0;
  double throttle_ = 0.0;
  double steer_noise_ = 0.0;
  double throttle_noise_ = 0.0;
  double last_t_ = 0.0;
  bool started_ = false;
};

/// Drives every trajectory of `session` in order, recording `seconds` per trajectory
/// (open paths end early at their last sample). The session must have no clients.
void drive_all(hil::Session& session, const VehicleParams& params, double seconds,
               std::uint64_t seed, DriverStyle style = {});

}  // namespace zst::tools
