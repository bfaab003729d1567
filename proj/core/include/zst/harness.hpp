#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "zst/control.hpp"
#include "zst/dynamics.hpp"
#include "zst/estimator.hpp"
#include "zst/imitation.hpp"
#include "zst/paths.hpp"

namespace zst {

enum class ControllerKind { kMpc, kNn, kPlayback };
enum class SensorMode { kTruth, kNoisy };

ControllerKind parse_controller_kind(const std::string& text);
std::string to_string(ControllerKind kind);
SensorMode parse_sensor_mode(const std::string& text);
std::string to_string(SensorMode mode);

/// Scaled plant parameters for model-mismatch studies. Identity by default.
struct PlantPerturbation {
  double wheelbase_scale = 1.0;
  double torque_scale = 1.0;
  double steering_bias = 0.0;  ///< added to every applied steering command

  VehicleParams apply(VehicleParams p) const;
};

enum class PathKind { kCircle, kLine, kCourse, kCsv };

/// Declarative description of the reference path of a scenario.
struct PathSpec {
  PathKind kind = PathKind::kCourse;
  double radius = 5.0;
  Direction direction = Direction::kCounterClockwise;
  double length = 30.0;
  double spacing = kDefaultSpacing;
  SpeedProfile profile = SpeedProfile::constant(1.0);
  CourseOptions course;
  std::filesystem::path csv_file;

  ReferencePath build() const;
};

/// Start-state offset relative to the first path sample; `jitter` adds a seeded
/// uniform draw in +-jitter per repetition.
struct InitialOffset {
  double lateral = 0.0;  ///< m, positive to the left of the path
  double heading = 0.0;  ///< rad
  double speed = 0.0;    ///< m/s relative to v_r
  double lateral_jitter = 0.0;
  double heading_jitter = 0.0;
  double speed_jitter = 0.0;
};

struct ScenarioConfig {
  VehicleParams vehicle;
  PlantPerturbation plant;
  PathSpec path;
  ControllerKind controller = ControllerKind::kMpc;
  MpcConfig mpc;
  std::filesystem::path model_file;     ///< NN controller weights
  std::filesystem::path playback_file;  ///< dataset CSV replayed by the playback controller
  double lookahead = 2.0;               ///< feature reference distance, m
  SensorMode sensor = SensorMode::kTruth;
  NoiseConfig noise;
  double gps_hz = 10.0;
  double control_hz = 10.0;
  double plant_hz = 100.0;
  double duration = 60.0;
  int repetitions = 1;
  std::uint64_t seed = 1;
  InitialOffset initial;
  double initial_speed_estimate_scale = 1.0;  ///< EKF prior speed as a multiple of the true speed
  double bail_out = 10.0;      ///< abort when cross-track error exceeds this, m
  bool stop_after_lap = false;  ///< end the run once a closed path has been lapped
  bool diagnostics = false;     ///< append estimator/solver columns to trace CSVs

  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

/// Inputs a controller sees at one control tick.
struct ControlInput {
  double t = 0.0;
  VehicleState estimate;
  std::size_t closest = 0;  ///< closest path index for the estimate
  ErrorState error;         ///< feature error state (lookahead reference)
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual Command act(const ControlInput& input) = 0;
  /// Objective of the last solve, for controllers that have one.
  virtual std::optional<double> last_cost() const { return std::nullopt; }
};

class MpcController final : public Controller {
 public:
  MpcController(const ReferencePath& path, const MpcConfig& config, const VehicleParams& params);
  Command act(const ControlInput& input) override;
  std::optional<double> last_cost() const override { return last_cost_; }

 private:
  MpcTracker tracker_;
  std::optional<double> last_cost_;
};

class NnController final : public Controller {
 public:
  explicit NnController(Model model) : model_(std::move(model)) {}
  Command act(const ControlInput& input) override { return forward(model_, input.error); }

 private:
  Model model_;
};

/// Replays recorded commands against time with a zero-order hold.
class PlaybackController final : public Controller {
 public:
  explicit PlaybackController(std::vector<Sample> recording);
  Command act(const ControlInput& input) override;

 private:
  std::vector<Sample> recording_;
};

std::unique_ptr<Controller> make_controller(const ScenarioConfig& cfg, const ReferencePath& path);

struct TraceRecord {
  double t = 0.0;
  VehicleState truth;
  VehicleState estimate;
  ErrorState error;
  Command command;
  double ct_err = 0.0;
  std::size_t ref_idx = 0;
  // Diagnostics.
  double cost = 0.0;
  Eigen::Vector2d position_innovation = Eigen::Vector2d::Zero();
  double heading_innovation = 0.0;
  double covariance_trace = 0.0;
};

struct RunTrace {
  std::vector<TraceRecord> records;
  bool diverged = false;      ///< bail-out distance exceeded
  bool controller_failed = false;
  std::optional<std::size_t> aborted_step;
  std::string abort_reason;
  bool completed_lap = false;
  bool reached_end = false;   ///< open path fully traversed
  double progress = 0.0;      ///< arc length advanced along the path, m

  bool flagged() const { return diverged || controller_failed; }
};

/// Low-level closed loop shared by scenarios and dataset collection.
struct SimulationSetup {
  const ReferencePath* path = nullptr;
  VehicleParams model;        ///< controller / estimator model
  VehicleParams plant;        ///< integrated plant
  double steering_bias = 0.0;
  VehicleState initial;
  std::optional<VehicleState> initial_estimate;  ///< EKF prior mean; defaults to `initial`
  double control_hz = 10.0;
  double plant_hz = 100.0;
  double gps_hz = 10.0;
  double duration = 60.0;
  double lookahead = 2.0;
  SensorMode sensor = SensorMode::kTruth;
  NoiseConfig noise;
  double bail_out = 10.0;
  bool stop_after_lap = false;
  std::uint64_t seed = 1;
};

RunTrace simulate(const SimulationSetup& setup, Controller& controller);

/// Initial state offset from path sample `index`: lateral to the left of the path,
/// heading added to the tangent, speed added to v_r (floored at 0).
VehicleState offset_start(const ReferencePath& path, std::size_t index, double lateral,
                          double heading, double speed);

/// Runs one repetition of a scenario. Repetition r draws its noise and initial
/// jitter from a stream seeded by (seed, r).
RunTrace run_scenario(const ScenarioConfig& cfg, int repetition = 0);
RunTrace run_scenario(const ScenarioConfig& cfg, const ReferencePath& path, Controller& controller,
                      int repetition = 0);

/// All repetitions of a scenario.
std::vector<RunTrace> run_repetitions(const ScenarioConfig& cfg);

struct SegmentSpeedStats {
  std::size_t first_index = 0;
  std::size_t last_index = 0;
  double reference_speed = 0.0;
  double mean_speed = 0.0;
  double min_speed = 0.0;
  double max_speed = 0.0;
  std::size_t count = 0;
};

struct ErrorSummary {
  std::vector<double> mean_error;   ///< per path index; NaN where never visited
  std::vector<std::size_t> count;   ///< records binned at each index
  double aggregate_mean = 0.0;      ///< over all records
  double aggregate_max = 0.0;
  std::size_t records = 0;
  std::vector<SegmentSpeedStats> segments;  ///< runs of constant reference speed
};

/// Bins every record's cross-track error by its reference index and averages over
/// all traces. Throws std::invalid_argument on empty input.
ErrorSummary evaluate(const std::vector<RunTrace>& traces, const ReferencePath& path);

/// Total variation of the steering command over a trace.
double steering_total_variation(const RunTrace& trace);

/// Trace CSV with header
/// `t,x,y,theta,v,xe,ye,thetae,ve_est,e1,e2,e3,e4,steering,throttle,ct_err,ref_idx`
/// (diagnostic columns appended when requested).
void write_trace_csv(const RunTrace& trace, const std::filesystem::path& file,
                     bool diagnostics = false);
RunTrace read_trace_csv(const std::filesystem::path& file);

enum class PlotKind { kOverlay, kControlProfile, kErrorCurve, kSpeedHeatmap };
PlotKind parse_plot_kind(const std::string& text);
std::string to_string(PlotKind kind);

/// Writes plot-ready CSV for `kind` and, when `svg` is set, a line/scatter SVG next to it.
/// overlay: t,x,y,ref_x,ref_y; control_profile: t,steering,throttle;
/// error_curve: ref_idx,s,x,y,mean_err,count; speed_heatmap: x,y,v.
void export_plot(PlotKind kind, const RunTrace* trace, const ErrorSummary* summary,
                 const ReferencePath& path, const std::filesystem::path& out, bool svg = false);

}  // namespace zst
