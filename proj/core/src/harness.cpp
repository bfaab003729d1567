#include "zst/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>

#include "zst/csv.hpp"

namespace zst {

ControllerKind parse_controller_kind(const std::string& text) {
  if (text == "mpc") return ControllerKind::kMpc;
  if (text == "nn") return ControllerKind::kNn;
  if (text == "playback") return ControllerKind::kPlayback;
  throw std::invalid_argument("unknown controller '" + text + "' (expected mpc|nn|playback)");
}

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kMpc: return "mpc";
    case ControllerKind::kNn: return "nn";
    case ControllerKind::kPlayback: return "playback";
  }
  return "?";
}

SensorMode parse_sensor_mode(const std::string& text) {
  if (text == "truth") return SensorMode::kTruth;
  if (text == "noisy") return SensorMode::kNoisy;
  throw std::invalid_argument("unknown sensor mode '" + text + "' (expected truth|noisy)");
}

std::string to_string(SensorMode mode) { return mode == SensorMode::kNoisy ? "noisy" : "truth"; }

VehicleParams PlantPerturbation::apply(VehicleParams p) const {
  p.wheelbase_l *= wheelbase_scale;
  p.torque_stall *= torque_scale;
  return p;
}

ReferencePath PathSpec::build() const {
  switch (kind) {
    case PathKind::kCircle: return make_circle(radius, direction, profile, spacing);
    case PathKind::kLine: return make_line(length, profile, spacing);
    case PathKind::kCourse: {
      CourseOptions options = course;
      options.spacing = spacing;
      return make_evaluation_course(profile, options);
    }
    case PathKind::kCsv: return read_path_csv(csv_file);
  }
  throw std::logic_error("unhandled path kind");
}

void ScenarioConfig::validate() const {
  vehicle.validate();
  mpc.validate();
  noise.validate();
  if (!(control_hz > 0.0) || !(plant_hz > 0.0) || !(gps_hz > 0.0)) {
    throw std::invalid_argument("rates must be positive");
  }
  const double ratio = plant_hz / control_hz;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0) {
    throw std::invalid_argument("plant rate must be an integer multiple of the control rate");
  }
  const double gps_ratio = control_hz / gps_hz;
  if (std::abs(gps_ratio - std::round(gps_ratio)) > 1e-9 || std::round(gps_ratio) < 1.0) {
    throw std::invalid_argument("control rate must be an integer multiple of the GPS rate");
  }
  if (1.0 / plant_hz > kMaxStep) throw std::invalid_argument("plant rate must be at least 10 Hz");
  if (!(duration > 0.0)) throw std::invalid_argument("duration must be positive");
  if (repetitions < 1) throw std::invalid_argument("repetitions must be at least 1");
  if (!(bail_out > 0.0)) throw std::invalid_argument("bail-out distance must be positive");
  if (!(lookahead >= 0.0)) throw std::invalid_argument("lookahead must be >= 0");
  if (!(initial_speed_estimate_scale >= 0.0)) {
    throw std::invalid_argument("initial speed estimate scale must be >= 0");
  }
}

// ---------------------------------------------------------------------------
// Controllers

MpcController::MpcController(const ReferencePath& path, const MpcConfig& config,
                             const VehicleParams& params)
    : tracker_(path, config, params) {}

Command MpcController::act(const ControlInput& input) {
  const MpcSolution solution = tracker_.act(input.estimate, input.closest);
  last_cost_ = solution.cost;
  return solution.command;
}

PlaybackController::PlaybackController(std::vector<Sample> recording)
    : recording_(std::move(recording)) {
  if (recording_.empty()) throw std::invalid_argument("playback recording is empty");
  std::stable_sort(recording_.begin(), recording_.end(),
                   [](const Sample& a, const Sample& b) { return a.t < b.t; });
}

Command PlaybackController::act(const ControlInput& input) {
  auto it = std::upper_bound(recording_.begin(), recording_.end(), input.t,
                             [](double t, const Sample& s) { return t < s.t; });
  if (it == recording_.begin()) return {};
  return std::prev(it)->u;
}

std::unique_ptr<Controller> make_controller(const ScenarioConfig& cfg, const ReferencePath& path) {
  switch (cfg.controller) {
    case ControllerKind::kMpc: return std::make_unique<MpcController>(path, cfg.mpc, cfg.vehicle);
    case ControllerKind::kNn: {
      if (cfg.model_file.empty()) throw std::invalid_argument("NN controller needs a model file");
      return std::make_unique<NnController>(load_model(cfg.model_file));
    }
    case ControllerKind::kPlayback: {
      if (cfg.playback_file.empty()) {
        throw std::invalid_argument("playback controller needs a recording file");
      }
      return std::make_unique<PlaybackController>(read_dataset_csv(cfg.playback_file).samples());
    }
  }
  throw std::logic_error("unhandled controller kind");
}

// ---------------------------------------------------------------------------
// Closed loop

VehicleState offset_start(const ReferencePath& path, std::size_t index, double lateral,
                          double heading, double speed) {
  const ReferenceSample& r = path[index];
  VehicleState q;
  q.x = r.x - lateral * std::sin(r.theta);
  q.y = r.y + lateral * std::cos(r.theta);
  q.theta = wrap_angle(r.theta + heading);
  q.v = std::max(0.0, r.v + speed);
  return q;
}

RunTrace simulate(const SimulationSetup& setup, Controller& controller) {
  if (setup.path == nullptr) throw std::invalid_argument("simulation needs a path");
  const ReferencePath& path = *setup.path;
  const auto substeps = static_cast<int>(std::llround(setup.plant_hz / setup.control_hz));
  const auto gps_every = std::max<long long>(1, std::llround(setup.control_hz / setup.gps_hz));
  const double plant_dt = 1.0 / setup.plant_hz;
  const auto steps = static_cast<std::size_t>(std::llround(setup.duration * setup.control_hz));

  std::mt19937_64 rng(setup.seed);
  std::normal_distribution<double> gaussian(0.0, 1.0);
  const Eigen::Matrix2d position_chol = setup.noise.position.llt().matrixL();
  const double heading_sigma = std::sqrt(setup.noise.heading);

  VehicleState truth = setup.initial;
  EkfState ekf;
  ekf.mean = setup.initial_estimate.value_or(truth);
  ekf.covariance = Eigen::Vector4d(setup.noise.position(0, 0), setup.noise.position(1, 1),
                                   setup.noise.heading, 0.25)
                       .asDiagonal();

  std::size_t truth_index = closest_point(path, {truth.x, truth.y}).index;
  std::size_t estimate_index = truth_index;

  RunTrace trace;
  trace.records.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) / setup.control_hz;

    Eigen::Vector2d measured_position(truth.x, truth.y);
    double measured_heading = truth.theta;
    if (setup.sensor == SensorMode::kNoisy) {
      const Eigen::Vector2d draw(gaussian(rng), gaussian(rng));
      measured_position += position_chol * draw;
      measured_heading = wrap_angle(measured_heading + heading_sigma * gaussian(rng));
    }
    if (static_cast<long long>(k) % gps_every == 0) {
      ekf = ekf_update_position(ekf, measured_position, setup.noise);
    }
    ekf = ekf_update_heading(ekf, measured_heading, setup.noise);

    VehicleState estimate = ekf.mean;
    if (setup.sensor == SensorMode::kTruth) {
      estimate = {truth.x, truth.y, truth.theta, ekf.mean.v};
    }
    estimate_index = closest_point_near(path, {estimate.x, estimate.y}, estimate_index).index;
    const ClosestPoint truth_cp = closest_point_near(path, {truth.x, truth.y}, truth_index);
    double moved = path.advance(truth_index, truth_cp.index);
    if (path.closed() && moved > 0.5 * path.length()) moved -= path.length();
    trace.progress += moved;
    truth_index = truth_cp.index;

    ControlInput input;
    input.t = t;
    input.estimate = estimate;
    input.closest = estimate_index;
    input.error = lookahead_error(path, estimate, estimate_index, setup.lookahead);

    Command command;
    try {
      command = controller.act(input);
    } catch (const std::exception& e) {
      trace.controller_failed = true;
      trace.aborted_step = k;
      trace.abort_reason = std::string("controller failed at step ") + std::to_string(k) + ": " + e.what();
      break;
    }

    TraceRecord record;
    record.t = t;
    record.truth = truth;
    record.estimate = estimate;
    record.error = input.error;
    record.command = command;
    record.ct_err = truth_cp.distance;
    record.ref_idx = truth_cp.index;
    record.cost = controller.last_cost().value_or(0.0);
    record.position_innovation = ekf.diagnostics.position_innovation;
    record.heading_innovation = ekf.diagnostics.heading_innovation;
    record.covariance_trace = ekf.covariance.trace();
    trace.records.push_back(record);

    if (truth_cp.distance > setup.bail_out) {
      trace.diverged = true;
      trace.aborted_step = k;
      trace.abort_reason = "cross-track error " + std::to_string(truth_cp.distance) +
                           " m exceeded bail-out at step " + std::to_string(k);
      break;
    }
    if (path.closed() && trace.progress >= path.length()) {
      trace.completed_lap = true;
      if (setup.stop_after_lap) break;
    }
    if (!path.closed() && truth_index + 1 == path.size()) {
      trace.reached_end = true;
      break;
    }

    const Command applied(command.steering() + setup.steering_bias, command.throttle());
    for (int j = 0; j < substeps; ++j) {
      truth = step(truth, applied, plant_dt, setup.plant);
      ekf = ekf_predict(ekf, command, plant_dt, setup.model, setup.noise);
    }
  }
  return trace;
}

namespace {

SimulationSetup setup_from(const ScenarioConfig& cfg, const ReferencePath& path, int repetition) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed & 0xffffffffu),
                    static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(repetition)};
  std::mt19937_64 rng(seq);
  auto jitter = [&rng](double range) {
    if (range <= 0.0) return 0.0;
    return std::uniform_real_distribution<double>(-range, range)(rng);
  };
  const double lateral = cfg.initial.lateral + jitter(cfg.initial.lateral_jitter);
  const double heading = cfg.initial.heading + jitter(cfg.initial.heading_jitter);
  const double speed = cfg.initial.speed + jitter(cfg.initial.speed_jitter);

  SimulationSetup setup;
  setup.path = &path;
  setup.model = cfg.vehicle;
  setup.plant = cfg.plant.apply(cfg.vehicle);
  setup.steering_bias = cfg.plant.steering_bias;
  setup.initial = offset_start(path, 0, lateral, heading, speed);
  if (cfg.initial_speed_estimate_scale != 1.0) {
    VehicleState prior = setup.initial;
    prior.v *= cfg.initial_speed_estimate_scale;
    setup.initial_estimate = prior;
  }
  setup.control_hz = cfg.control_hz;
  setup.plant_hz = cfg.plant_hz;
  setup.gps_hz = cfg.gps_hz;
  setup.duration = cfg.duration;
  setup.lookahead = cfg.lookahead;
  setup.sensor = cfg.sensor;
  setup.noise = cfg.noise;
  setup.bail_out = cfg.bail_out;
  setup.stop_after_lap = cfg.stop_after_lap;
  setup.seed = rng();
  return setup;
}

}  // namespace

RunTrace run_scenario(const ScenarioConfig& cfg, const ReferencePath& path, Controller& controller,
                      int repetition) {
  cfg.validate();
  return simulate(setup_from(cfg, path, repetition), controller);
}

RunTrace run_scenario(const ScenarioConfig& cfg, int repetition) {
  cfg.validate();
  const ReferencePath path = cfg.path.build();
  auto controller = make_controller(cfg, path);
  return simulate(setup_from(cfg, path, repetition), *controller);
}

std::vector<RunTrace> run_repetitions(const ScenarioConfig& cfg) {
  cfg.validate();
  const ReferencePath path = cfg.path.build();
  std::vector<RunTrace> traces;
  for (int r = 0; r < cfg.repetitions; ++r) {
    auto controller = make_controller(cfg, path);
    traces.push_back(simulate(setup_from(cfg, path, r), *controller));
  }
  return traces;
}

// ---------------------------------------------------------------------------
// Evaluation

ErrorSummary evaluate(const std::vector<RunTrace>& traces, const ReferencePath& path) {
  if (traces.empty()) throw std::invalid_argument("evaluate needs at least one trace");
  ErrorSummary summary;
  const std::size_t n = path.size();
  std::vector<double> sums(n, 0.0);
  summary.count.assign(n, 0);
  double total = 0.0;
  for (const RunTrace& trace : traces) {
    for (const TraceRecord& r : trace.records) {
      if (r.ref_idx >= n) throw std::invalid_argument("trace reference index outside the path");
      sums[r.ref_idx] += r.ct_err;
      ++summary.count[r.ref_idx];
      total += r.ct_err;
      summary.aggregate_max = std::max(summary.aggregate_max, r.ct_err);
      ++summary.records;
    }
  }
  if (summary.records == 0) throw std::invalid_argument("traces contain no records");
  summary.mean_error.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    summary.mean_error[i] = summary.count[i] > 0 ? sums[i] / static_cast<double>(summary.count[i])
                                                 : std::numeric_limits<double>::quiet_NaN();
  }
  summary.aggregate_mean = total / static_cast<double>(summary.records);

  // Maximal runs of constant reference speed.
  std::vector<std::size_t> segment_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0 || path[i].v != path[i - 1].v) {
      SegmentSpeedStats seg;
      seg.first_index = i;
      seg.reference_speed = path[i].v;
      seg.min_speed = std::numeric_limits<double>::infinity();
      seg.max_speed = -std::numeric_limits<double>::infinity();
      summary.segments.push_back(seg);
    }
    summary.segments.back().last_index = i;
    segment_of[i] = summary.segments.size() - 1;
  }
  for (const RunTrace& trace : traces) {
    for (const TraceRecord& r : trace.records) {
      SegmentSpeedStats& seg = summary.segments[segment_of[r.ref_idx]];
      seg.mean_speed += r.truth.v;
      seg.min_speed = std::min(seg.min_speed, r.truth.v);
      seg.max_speed = std::max(seg.max_speed, r.truth.v);
      ++seg.count;
    }
  }
  for (SegmentSpeedStats& seg : summary.segments) {
    if (seg.count > 0) {
      seg.mean_speed /= static_cast<double>(seg.count);
    } else {
      seg.mean_speed = seg.min_speed = seg.max_speed = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return summary;
}

double steering_total_variation(const RunTrace& trace) {
  double tv = 0.0;
  for (std::size_t i = 1; i < trace.records.size(); ++i) {
    tv += std::abs(trace.records[i].command.steering() - trace.records[i - 1].command.steering());
  }
  return tv;
}

// ---------------------------------------------------------------------------
// Trace files

namespace {

constexpr const char* kTraceHeader =
    "t,x,y,theta,v,xe,ye,thetae,ve_est,e1,e2,e3,e4,steering,throttle,ct_err,ref_idx";
constexpr const char* kDiagnosticHeader = ",cost,innov_x,innov_y,innov_theta,cov_trace";

}  // namespace

void write_trace_csv(const RunTrace& trace, const std::filesystem::path& file, bool diagnostics) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open '" + file.string() + "' for writing");
  out << kTraceHeader << (diagnostics ? kDiagnosticHeader : "") << '\n';
  using csv::format;
  for (const TraceRecord& r : trace.records) {
    std::vector<std::string> fields = {
        format(r.t), format(r.truth.x), format(r.truth.y), format(r.truth.theta),
        format(r.truth.v), format(r.estimate.x), format(r.estimate.y), format(r.estimate.theta),
        format(r.estimate.v), format(r.error.e1), format(r.error.e2), format(r.error.e3),
        format(r.error.e4), format(r.command.steering()), format(r.command.throttle()),
        format(r.ct_err), std::to_string(r.ref_idx)};
    if (diagnostics) {
      fields.insert(fields.end(), {format(r.cost), format(r.position_innovation.x()),
                                   format(r.position_innovation.y()),
                                   format(r.heading_innovation), format(r.covariance_trace)});
    }
    out << csv::join(fields) << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + file.string() + "'");
}

RunTrace read_trace_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open trace '" + file.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(file.string() + ": empty trace file");
  const std::string_view header = csv::trim_line(line);
  const bool diagnostics = header == std::string(kTraceHeader) + kDiagnosticHeader;
  if (!diagnostics && header != kTraceHeader) {
    throw std::runtime_error(file.string() + ":1: unexpected trace header");
  }
  const std::size_t expected = diagnostics ? 22 : 17;
  RunTrace trace;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = csv::trim_line(line);
    if (view.empty()) continue;
    const auto f = csv::split(view);
    try {
      if (f.size() != expected) throw std::invalid_argument("wrong field count");
      TraceRecord r;
      auto d = [&f](std::size_t i) { return csv::parse_double(f[i]); };
      r.t = d(0);
      r.truth = {d(1), d(2), d(3), d(4)};
      r.estimate = {d(5), d(6), d(7), d(8)};
      r.error = {d(9), d(10), d(11), d(12)};
      r.command = Command(d(13), d(14));
      r.ct_err = d(15);
      r.ref_idx = static_cast<std::size_t>(csv::parse_int(f[16]));
      if (diagnostics) {
        r.cost = d(17);
        r.position_innovation = {d(18), d(19)};
        r.heading_innovation = d(20);
        r.covariance_trace = d(21);
      }
      trace.records.push_back(r);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return trace;
}

}  // namespace zst
