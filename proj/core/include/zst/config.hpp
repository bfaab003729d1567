#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "zst/harness.hpp"
#include "zst/imitation.hpp"

namespace zst {

struct CollectConfig {
  bool multi_speed = false;  ///< two-speed variant of the training set
  double speed = 1.0;        ///< constant speed of the single-speed variant, m/s
  double run_seconds = 60.0;
  Perturbation perturbation;
  std::uint64_t seed = 7;
};

struct HilConfig {
  std::string bind = "127.0.0.1";
  unsigned short port = 8765;  ///< 0 picks a free port
  double tick_hz = 50.0;
  double broadcast_hz = 20.0;
  double record_hz = 10.0;
  double deadman_seconds = 0.5;
  double time_scale = 1.0;      ///< simulated seconds per wall-clock second
  bool multi_speed = false;     ///< serve the two-speed training set
  std::size_t max_ref_points = 50;
  double ref_window_m = 10.0;   ///< arc length of the broadcast reference window

  void validate() const;
};

/// Every module's settings, as read from one YAML file. Missing keys keep defaults;
/// unknown keys are errors.
struct AppConfig {
  ScenarioConfig scenario;
  CollectConfig collect;
  TrainConfig train;
  HilConfig hil;
};

AppConfig parse_config(const std::string& yaml_text, const std::string& origin = "<string>");
AppConfig load_config(const std::filesystem::path& file);
/// Fully resolved config as YAML; parse_config(dump_config(c)) reproduces c.
std::string dump_config(const AppConfig& config);

}  // namespace zst
