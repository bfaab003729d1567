#include <cmath>
#include <random>

#include "zst/harness.hpp"
#include "zst/imitation.hpp"

namespace zst {

SpeedProfile training_profile(bool multi_speed, double speed) {
  return multi_speed ? SpeedProfile::halves(1.0, 2.0, 2.0) : SpeedProfile::constant(speed);
}

std::vector<ReferencePath> make_training_set(bool multi_speed, double speed, double spacing) {
  const SpeedProfile profile = training_profile(multi_speed, speed);
  std::vector<ReferencePath> set;
  for (double radius : {2.0, 5.0, 25.0}) {
    for (Direction d : {Direction::kCounterClockwise, Direction::kClockwise}) {
      set.push_back(make_circle(radius, d, profile, spacing));
    }
  }
  set.push_back(make_line(30.0, profile, spacing));
  return set;
}

Dataset collect_mpc_dataset(const std::vector<ReferencePath>& trajectories, const VehicleParams& p,
                            const MpcConfig& mpc, double run_seconds,
                            const Perturbation& perturbation, std::uint64_t seed,
                            const CollectOptions& options) {
  if (trajectories.empty()) throw std::invalid_argument("no trajectories to collect on");
  if (!(run_seconds > 0.0)) throw std::invalid_argument("run length must be positive");
  if (perturbation.episode_seconds < 0.0) {
    throw std::invalid_argument("episode length must be >= 0");
  }
  p.validate();
  mpc.validate();

  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double range) {
    return range > 0.0 ? std::uniform_real_distribution<double>(-range, range)(rng) : 0.0;
  };

  const double episode = perturbation.episode_seconds > 0.0
                             ? std::min(perturbation.episode_seconds, run_seconds)
                             : run_seconds;
  const auto episodes = static_cast<int>(std::ceil(run_seconds / episode - 1e-9));

  Dataset data;
  for (const ReferencePath& path : trajectories) {
    std::vector<Sample> samples;
    for (int ep = 0; ep < episodes; ++ep) {
      // Open paths start in their first half so the episode has room to run.
      const std::size_t starts = path.closed() ? path.size() : std::max<std::size_t>(1, path.size() / 2);
      const std::size_t start =
          ep == 0 ? 0 : std::uniform_int_distribution<std::size_t>(0, starts - 1)(rng);

      SimulationSetup setup;
      setup.path = &path;
      setup.model = p;
      setup.plant = p;
      setup.initial = offset_start(path, start, uniform(perturbation.lateral),
                                   uniform(perturbation.heading), uniform(perturbation.speed));
      setup.control_hz = options.control_hz;
      setup.plant_hz = options.plant_hz;
      setup.gps_hz = options.control_hz;
      setup.duration = std::min(episode, run_seconds - ep * episode);
      setup.lookahead = options.lookahead;
      setup.bail_out = 5.0;
      setup.seed = rng();

      MpcController controller(path, mpc, p);
      const RunTrace trace = simulate(setup, controller);
      if (trace.controller_failed) {
        throw std::runtime_error("MPC collection on trajectory '" + path.name() + "' failed: " +
                                 trace.abort_reason);
      }
      for (const TraceRecord& r : trace.records) {
        samples.push_back({r.error, r.command, SampleSource::kMpc, path.name(), ep * episode + r.t});
      }
    }
    data.append(Dataset(std::move(samples)));
  }
  return data;
}

}  // namespace zst
