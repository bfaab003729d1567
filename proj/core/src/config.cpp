#include "zst/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace zst {

void HilConfig::validate() const {
  for (double hz : {tick_hz, broadcast_hz, record_hz}) {
    if (!(hz > 0.0)) throw std::invalid_argument("hil rates must be positive");
  }
  if (broadcast_hz > tick_hz || record_hz > tick_hz) {
    throw std::invalid_argument("hil broadcast and record rates cannot exceed the tick rate");
  }
  if (!(deadman_seconds > 0.0)) throw std::invalid_argument("hil.deadman must be positive");
  if (!(time_scale > 0.0)) throw std::invalid_argument("hil.time_scale must be positive");
  if (max_ref_points < 2) throw std::invalid_argument("hil.max_ref_points must be at least 2");
  if (!(ref_window_m > 0.0)) throw std::invalid_argument("hil.ref_window must be positive");
}

namespace {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mapping node that remembers which keys were read; leftovers are reported to
/// `unknown` when the section goes out of scope.
class Section {
 public:
  Section(YAML::Node node, std::string name, std::vector<std::string>* unknown)
      : node_(std::move(node)), name_(std::move(name)), unknown_(unknown) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) fail("", "expected a mapping");
  }
  ~Section() {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.count(key)) unknown_->push_back(path(key));
    }
  }
  Section(const Section&) = delete;
  Section& operator=(const Section&) = delete;

  YAML::Node get(const std::string& key) {
    used_.insert(key);
    if (!node_ || !node_.IsMap()) return YAML::Node();
    return node_[key];
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    const YAML::Node n = get(key);
    if (!n || n.IsNull()) return;
    try {
      out = n.as<T>();
    } catch (const YAML::Exception&) {
      fail(key, "invalid value '" + YAML::Dump(n) + "'");
    }
  }

  Section sub(const std::string& key) { return Section(get(key), path(key), unknown_); }
  std::vector<std::string>* unknown() const { return unknown_; }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(path(key) + ": " + what);
  }
  std::string path(const std::string& key) const {
    if (key.empty()) return name_;
    return name_.empty() ? key : name_ + "." + key;
  }

 private:
  YAML::Node node_;
  std::string name_;
  std::vector<std::string>* unknown_;
  std::set<std::string> used_;
};

template <int N>
Eigen::Matrix<double, N, N> read_matrix(Section& s, const std::string& key,
                                        const Eigen::Matrix<double, N, N>& fallback) {
  const YAML::Node n = s.get(key);
  if (!n || n.IsNull()) return fallback;
  if (!n.IsSequence() || n.size() != N) {
    s.fail(key, "expected " + std::to_string(N) + " diagonal entries or an " + std::to_string(N) +
                    "x" + std::to_string(N) + " matrix");
  }
  Eigen::Matrix<double, N, N> m = Eigen::Matrix<double, N, N>::Zero();
  try {
    if (n[0].IsSequence()) {
      for (int i = 0; i < N; ++i) {
        if (!n[i].IsSequence() || n[i].size() != N) s.fail(key, "ragged matrix");
        for (int j = 0; j < N; ++j) m(i, j) = n[i][j].as<double>();
      }
    } else {
      for (int i = 0; i < N; ++i) m(i, i) = n[i].as<double>();
    }
  } catch (const YAML::Exception&) {
    s.fail(key, "matrix entries must be numbers");
  }
  return m;
}

SpeedProfile read_profile(Section& parent, const std::string& key, const SpeedProfile& fallback) {
  const YAML::Node n = parent.get(key);
  if (!n || n.IsNull()) return fallback;
  if (n.IsScalar()) {
    try {
      return SpeedProfile::constant(n.as<double>());
    } catch (const YAML::Exception&) {
      parent.fail(key, "expected a speed or a mapping");
    }
  }
  Section s(n, parent.path(key), parent.unknown());
  double ramp = fallback.ramp_length();
  s.read("ramp", ramp);
  bool fractional = true;
  s.read("fractional", fractional);
  const YAML::Node constant = s.get("constant");
  const YAML::Node halves = s.get("halves");
  const YAML::Node intervals = s.get("intervals");
  const int forms = (constant ? 1 : 0) + (halves ? 1 : 0) + (intervals ? 1 : 0);
  if (forms != 1) s.fail("", "give exactly one of constant, halves, intervals");
  try {
    if (constant) return SpeedProfile::constant(constant.as<double>());
    if (halves) {
      if (!halves.IsSequence() || halves.size() != 2) s.fail("halves", "expected [first, second]");
      return SpeedProfile::halves(halves[0].as<double>(), halves[1].as<double>(), ramp);
    }
    std::vector<SpeedProfile::Interval> list;
    if (!intervals.IsSequence()) s.fail("intervals", "expected a list of [end, speed]");
    for (const auto& item : intervals) {
      if (!item.IsSequence() || item.size() != 2) s.fail("intervals", "expected [end, speed]");
      list.push_back({item[0].as<double>(), item[1].as<double>()});
    }
    return SpeedProfile(std::move(list), ramp, fractional);
  } catch (const YAML::Exception&) {
    s.fail("", "speeds must be numbers");
  }
}

template <typename Enum, typename Parse>
void read_enum(Section& s, const std::string& key, Enum& out, Parse parse) {
  std::string text;
  s.read(key, text);
  if (text.empty()) return;
  try {
    out = parse(text);
  } catch (const std::invalid_argument& e) {
    s.fail(key, e.what());
  }
}

PathKind parse_path_kind(const std::string& text) {
  if (text == "course") return PathKind::kCourse;
  if (text == "circle") return PathKind::kCircle;
  if (text == "line") return PathKind::kLine;
  if (text == "csv") return PathKind::kCsv;
  throw std::invalid_argument("unknown path kind '" + text + "' (expected course|circle|line|csv)");
}

std::string path_kind_name(PathKind kind) {
  switch (kind) {
    case PathKind::kCourse: return "course";
    case PathKind::kCircle: return "circle";
    case PathKind::kLine: return "line";
    case PathKind::kCsv: return "csv";
  }
  return "?";
}

Direction parse_direction(const std::string& text) {
  if (text == "ccw") return Direction::kCounterClockwise;
  if (text == "cw") return Direction::kClockwise;
  throw std::invalid_argument("unknown direction '" + text + "' (expected ccw|cw)");
}

Activation parse_activation(const std::string& text) {
  if (text == "tanh") return Activation::kTanh;
  if (text == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation '" + text + "' (expected tanh|relu)");
}

void read_vehicle(Section s, VehicleParams& v) {
  s.read("beta", v.beta);
  s.read("wheelbase", v.wheelbase_l);
  s.read("gear_ratio", v.gear_ratio_gamma);
  s.read("wheel_radius", v.wheel_radius_Rw);
  s.read("wheel_inertia", v.wheel_inertia_Iw);
  s.read("torque_stall", v.torque_stall);
  s.read("speed_noload", v.speed_noload);
}

void read_path(Section s, PathSpec& p) {
  read_enum(s, "kind", p.kind, parse_path_kind);
  s.read("radius", p.radius);
  read_enum(s, "direction", p.direction, parse_direction);
  s.read("length", p.length);
  s.read("spacing", p.spacing);
  std::string file;
  s.read("file", file);
  if (!file.empty()) p.csv_file = file;
  p.profile = read_profile(s, "speed", p.profile);
  Section c = s.sub("course");
  c.read("corner_radius", p.course.corner_radius);
  c.read("sinusoid_amplitude", p.course.sinusoid_amplitude);
  c.read("sinusoid_periods", p.course.sinusoid_periods);
  c.read("arc_sagitta", p.course.arc_sagitta);
  const YAML::Node corner = c.get("corner_speed");
  if (corner && !corner.IsNull()) {
    try {
      p.course.corner_speed = corner.as<double>();
    } catch (const YAML::Exception&) {
      c.fail("corner_speed", "expected a number");
    }
  }
}

void read_sections(const YAML::Node& root, AppConfig& cfg, std::vector<std::string>* unknown) {
  Section top(root, "", unknown);
  ScenarioConfig& sc = cfg.scenario;
  read_vehicle(top.sub("vehicle"), sc.vehicle);
  {
    Section s = top.sub("plant");
    s.read("wheelbase_scale", sc.plant.wheelbase_scale);
    s.read("torque_scale", sc.plant.torque_scale);
    s.read("steering_bias", sc.plant.steering_bias);
  }
  read_path(top.sub("path"), sc.path);
  read_enum(top, "controller", sc.controller, parse_controller_kind);
  {
    Section s = top.sub("mpc");
    s.read("horizon", sc.mpc.horizon_N);
    s.read("dt", sc.mpc.dt);
    sc.mpc.Q = read_matrix<4>(s, "Q", sc.mpc.Q);
    sc.mpc.R = read_matrix<2>(s, "R", sc.mpc.R);
  }
  {
    Section s = top.sub("nn");
    std::string model;
    s.read("model", model);
    if (!model.empty()) sc.model_file = model;
    s.read("lookahead", sc.lookahead);
  }
  {
    Section s = top.sub("playback");
    std::string file;
    s.read("file", file);
    if (!file.empty()) sc.playback_file = file;
  }
  {
    Section s = top.sub("sensors");
    read_enum(s, "mode", sc.sensor, parse_sensor_mode);
    s.read("gps_hz", sc.gps_hz);
    sc.noise.process = read_matrix<4>(s, "process", sc.noise.process);
    double sigma_pos = std::sqrt(sc.noise.position(0, 0));
    s.read("position_sigma", sigma_pos);
    sc.noise.position = Eigen::Vector2d(sigma_pos * sigma_pos, sigma_pos * sigma_pos).asDiagonal();
    double sigma_heading = std::sqrt(sc.noise.heading);
    s.read("heading_sigma", sigma_heading);
    sc.noise.heading = sigma_heading * sigma_heading;
  }
  {
    Section s = top.sub("simulation");
    s.read("control_hz", sc.control_hz);
    s.read("plant_hz", sc.plant_hz);
    s.read("duration", sc.duration);
    s.read("repetitions", sc.repetitions);
    s.read("seed", sc.seed);
    s.read("bail_out", sc.bail_out);
    s.read("stop_after_lap", sc.stop_after_lap);
    s.read("diagnostics", sc.diagnostics);
  }
  {
    Section s = top.sub("initial_offset");
    s.read("lateral", sc.initial.lateral);
    s.read("heading", sc.initial.heading);
    s.read("speed", sc.initial.speed);
    s.read("lateral_jitter", sc.initial.lateral_jitter);
    s.read("heading_jitter", sc.initial.heading_jitter);
    s.read("speed_jitter", sc.initial.speed_jitter);
    s.read("speed_estimate_scale", sc.initial_speed_estimate_scale);
  }
  {
    Section s = top.sub("collect");
    s.read("multi_speed", cfg.collect.multi_speed);
    s.read("speed", cfg.collect.speed);
    s.read("run_seconds", cfg.collect.run_seconds);
    s.read("lateral", cfg.collect.perturbation.lateral);
    s.read("heading", cfg.collect.perturbation.heading);
    s.read("speed_offset", cfg.collect.perturbation.speed);
    s.read("episode_seconds", cfg.collect.perturbation.episode_seconds);
    s.read("seed", cfg.collect.seed);
  }
  {
    Section s = top.sub("train");
    TrainConfig& t = cfg.train;
    s.read("epochs", t.epochs);
    s.read("batch_size", t.batch_size);
    s.read("learning_rate", t.learning_rate);
    s.read("beta1", t.beta1);
    s.read("beta2", t.beta2);
    s.read("epsilon", t.epsilon);
    s.read("seed", t.seed);
    s.read("validation_fraction", t.validation_fraction);
    s.read("hidden1", t.hidden1);
    s.read("hidden2", t.hidden2);
    read_enum(s, "activation", t.hidden, parse_activation);
  }
  {
    Section s = top.sub("hil");
    HilConfig& h = cfg.hil;
    s.read("bind", h.bind);
    s.read("port", h.port);
    s.read("tick_hz", h.tick_hz);
    s.read("broadcast_hz", h.broadcast_hz);
    s.read("record_hz", h.record_hz);
    s.read("deadman", h.deadman_seconds);
    s.read("time_scale", h.time_scale);
    s.read("multi_speed", h.multi_speed);
    s.read("max_ref_points", h.max_ref_points);
    s.read("ref_window", h.ref_window_m);
  }
}

void read_config(const YAML::Node& root, AppConfig& cfg) {
  std::vector<std::string> unknown;
  read_sections(root, cfg, &unknown);
  if (!unknown.empty()) {
    std::string list;
    for (const auto& key : unknown) list += (list.empty() ? "" : ", ") + key;
    throw ConfigError("unknown key(s): " + list);
  }
}

template <int N>
void emit_matrix(YAML::Emitter& out, const Eigen::Matrix<double, N, N>& m) {
  out << YAML::Flow << YAML::BeginSeq;
  if (m.isDiagonal()) {
    for (int i = 0; i < N; ++i) out << m(i, i);
  } else {
    for (int i = 0; i < N; ++i) {
      out << YAML::Flow << YAML::BeginSeq;
      for (int j = 0; j < N; ++j) out << m(i, j);
      out << YAML::EndSeq;
    }
  }
  out << YAML::EndSeq;
}

void emit_profile(YAML::Emitter& out, const SpeedProfile& p) {
  out << YAML::BeginMap;
  if (p.is_constant()) {
    out << YAML::Key << "constant" << YAML::Value << p.intervals().front().speed;
  } else {
    out << YAML::Key << "intervals" << YAML::Value << YAML::BeginSeq;
    for (const auto& i : p.intervals()) {
      out << YAML::Flow << YAML::BeginSeq << i.end << i.speed << YAML::EndSeq;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "fractional" << YAML::Value << p.fractional();
  }
  out << YAML::Key << "ramp" << YAML::Value << p.ramp_length();
  out << YAML::EndMap;
}

}  // namespace

AppConfig parse_config(const std::string& yaml_text, const std::string& origin) {
  AppConfig cfg;
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw std::runtime_error(origin + ": " + e.what());
  }
  if (root && !root.IsNull() && !root.IsMap()) {
    throw std::runtime_error(origin + ": top level must be a mapping");
  }
  try {
    read_config(root, cfg);
    cfg.scenario.validate();
    cfg.train.validate();
    cfg.hil.validate();
  } catch (const std::exception& e) {
    throw std::runtime_error(origin + ": " + e.what());
  }
  return cfg;
}

AppConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open config '" + file.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), file.string());
}

std::string dump_config(const AppConfig& cfg) {
  const ScenarioConfig& sc = cfg.scenario;
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;

  out << YAML::Key << "vehicle" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "beta" << YAML::Value << sc.vehicle.beta;
  out << YAML::Key << "wheelbase" << YAML::Value << sc.vehicle.wheelbase_l;
  out << YAML::Key << "gear_ratio" << YAML::Value << sc.vehicle.gear_ratio_gamma;
  out << YAML::Key << "wheel_radius" << YAML::Value << sc.vehicle.wheel_radius_Rw;
  out << YAML::Key << "wheel_inertia" << YAML::Value << sc.vehicle.wheel_inertia_Iw;
  out << YAML::Key << "torque_stall" << YAML::Value << sc.vehicle.torque_stall;
  out << YAML::Key << "speed_noload" << YAML::Value << sc.vehicle.speed_noload;
  out << YAML::EndMap;

  out << YAML::Key << "plant" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "wheelbase_scale" << YAML::Value << sc.plant.wheelbase_scale;
  out << YAML::Key << "torque_scale" << YAML::Value << sc.plant.torque_scale;
  out << YAML::Key << "steering_bias" << YAML::Value << sc.plant.steering_bias;
  out << YAML::EndMap;

  out << YAML::Key << "path" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << path_kind_name(sc.path.kind);
  out << YAML::Key << "radius" << YAML::Value << sc.path.radius;
  out << YAML::Key << "direction" << YAML::Value
      << (sc.path.direction == Direction::kClockwise ? "cw" : "ccw");
  out << YAML::Key << "length" << YAML::Value << sc.path.length;
  out << YAML::Key << "spacing" << YAML::Value << sc.path.spacing;
  if (!sc.path.csv_file.empty()) out << YAML::Key << "file" << YAML::Value << sc.path.csv_file.string();
  out << YAML::Key << "speed" << YAML::Value;
  emit_profile(out, sc.path.profile);
  out << YAML::Key << "course" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "corner_radius" << YAML::Value << sc.path.course.corner_radius;
  out << YAML::Key << "sinusoid_amplitude" << YAML::Value << sc.path.course.sinusoid_amplitude;
  out << YAML::Key << "sinusoid_periods" << YAML::Value << sc.path.course.sinusoid_periods;
  out << YAML::Key << "arc_sagitta" << YAML::Value << sc.path.course.arc_sagitta;
  if (sc.path.course.corner_speed) {
    out << YAML::Key << "corner_speed" << YAML::Value << *sc.path.course.corner_speed;
  }
  out << YAML::EndMap << YAML::EndMap;

  out << YAML::Key << "controller" << YAML::Value << to_string(sc.controller);
  out << YAML::Key << "mpc" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "horizon" << YAML::Value << sc.mpc.horizon_N;
  out << YAML::Key << "dt" << YAML::Value << sc.mpc.dt;
  out << YAML::Key << "Q" << YAML::Value;
  emit_matrix<4>(out, sc.mpc.Q);
  out << YAML::Key << "R" << YAML::Value;
  emit_matrix<2>(out, sc.mpc.R);
  out << YAML::EndMap;

  out << YAML::Key << "nn" << YAML::Value << YAML::BeginMap;
  if (!sc.model_file.empty()) out << YAML::Key << "model" << YAML::Value << sc.model_file.string();
  out << YAML::Key << "lookahead" << YAML::Value << sc.lookahead;
  out << YAML::EndMap;
  if (!sc.playback_file.empty()) {
    out << YAML::Key << "playback" << YAML::Value << YAML::BeginMap << YAML::Key << "file"
        << YAML::Value << sc.playback_file.string() << YAML::EndMap;
  }

  out << YAML::Key << "sensors" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "mode" << YAML::Value << to_string(sc.sensor);
  out << YAML::Key << "gps_hz" << YAML::Value << sc.gps_hz;
  out << YAML::Key << "process" << YAML::Value;
  emit_matrix<4>(out, sc.noise.process);
  out << YAML::Key << "position_sigma" << YAML::Value << std::sqrt(sc.noise.position(0, 0));
  out << YAML::Key << "heading_sigma" << YAML::Value << std::sqrt(sc.noise.heading);
  out << YAML::EndMap;

  out << YAML::Key << "simulation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "control_hz" << YAML::Value << sc.control_hz;
  out << YAML::Key << "plant_hz" << YAML::Value << sc.plant_hz;
  out << YAML::Key << "duration" << YAML::Value << sc.duration;
  out << YAML::Key << "repetitions" << YAML::Value << sc.repetitions;
  out << YAML::Key << "seed" << YAML::Value << sc.seed;
  out << YAML::Key << "bail_out" << YAML::Value << sc.bail_out;
  out << YAML::Key << "stop_after_lap" << YAML::Value << sc.stop_after_lap;
  out << YAML::Key << "diagnostics" << YAML::Value << sc.diagnostics;
  out << YAML::EndMap;

  out << YAML::Key << "initial_offset" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "lateral" << YAML::Value << sc.initial.lateral;
  out << YAML::Key << "heading" << YAML::Value << sc.initial.heading;
  out << YAML::Key << "speed" << YAML::Value << sc.initial.speed;
  out << YAML::Key << "lateral_jitter" << YAML::Value << sc.initial.lateral_jitter;
  out << YAML::Key << "heading_jitter" << YAML::Value << sc.initial.heading_jitter;
  out << YAML::Key << "speed_jitter" << YAML::Value << sc.initial.speed_jitter;
  out << YAML::Key << "speed_estimate_scale" << YAML::Value << sc.initial_speed_estimate_scale;
  out << YAML::EndMap;

  out << YAML::Key << "collect" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "multi_speed" << YAML::Value << cfg.collect.multi_speed;
  out << YAML::Key << "speed" << YAML::Value << cfg.collect.speed;
  out << YAML::Key << "run_seconds" << YAML::Value << cfg.collect.run_seconds;
  out << YAML::Key << "lateral" << YAML::Value << cfg.collect.perturbation.lateral;
  out << YAML::Key << "heading" << YAML::Value << cfg.collect.perturbation.heading;
  out << YAML::Key << "speed_offset" << YAML::Value << cfg.collect.perturbation.speed;
  out << YAML::Key << "episode_seconds" << YAML::Value << cfg.collect.perturbation.episode_seconds;
  out << YAML::Key << "seed" << YAML::Value << cfg.collect.seed;
  out << YAML::EndMap;

  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "epochs" << YAML::Value << cfg.train.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << cfg.train.batch_size;
  out << YAML::Key << "learning_rate" << YAML::Value << cfg.train.learning_rate;
  out << YAML::Key << "beta1" << YAML::Value << cfg.train.beta1;
  out << YAML::Key << "beta2" << YAML::Value << cfg.train.beta2;
  out << YAML::Key << "epsilon" << YAML::Value << cfg.train.epsilon;
  out << YAML::Key << "seed" << YAML::Value << cfg.train.seed;
  out << YAML::Key << "validation_fraction" << YAML::Value << cfg.train.validation_fraction;
  out << YAML::Key << "hidden1" << YAML::Value << cfg.train.hidden1;
  out << YAML::Key << "hidden2" << YAML::Value << cfg.train.hidden2;
  out << YAML::Key << "activation" << YAML::Value
      << (cfg.train.hidden == Activation::kRelu ? "relu" : "tanh");
  out << YAML::EndMap;

  out << YAML::Key << "hil" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "bind" << YAML::Value << cfg.hil.bind;
  out << YAML::Key << "port" << YAML::Value << cfg.hil.port;
  out << YAML::Key << "tick_hz" << YAML::Value << cfg.hil.tick_hz;
  out << YAML::Key << "broadcast_hz" << YAML::Value << cfg.hil.broadcast_hz;
  out << YAML::Key << "record_hz" << YAML::Value << cfg.hil.record_hz;
  out << YAML::Key << "deadman" << YAML::Value << cfg.hil.deadman_seconds;
  out << YAML::Key << "time_scale" << YAML::Value << cfg.hil.time_scale;
  out << YAML::Key << "multi_speed" << YAML::Value << cfg.hil.multi_speed;
  out << YAML::Key << "max_ref_points" << YAML::Value << cfg.hil.max_ref_points;
  out << YAML::Key << "ref_window" << YAML::Value << cfg.hil.ref_window_m;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace zst
