#include "zst/hilbridge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "zst/csv.hpp"

namespace zst::hil {

using nlohmann::json;

std::vector<Trajectory> training_trajectories(bool multi_speed) {
  std::vector<Trajectory> out;
  for (ReferencePath& path : make_training_set(multi_speed)) {
    std::string shape = "line", direction;
    double radius = 0.0;
    if (path.closed()) {
      // Circles start at the origin heading +x, so the centroid sits at (0, +-r).
      double cy = 0.0;
      for (std::size_t i = 0; i < path.size(); ++i) cy += path[i].y;
      cy /= static_cast<double>(path.size());
      shape = "circle";
      radius = std::abs(cy);
      direction = cy > 0.0 ? "ccw" : "cw";
    }
    std::string id = path.name();
    out.push_back({std::move(id), shape, radius, direction, training_profile(multi_speed),
                   std::move(path)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wire format

namespace {

double number_field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw WireError(std::string("missing field '") + key + "'");
  if (!it->is_number()) throw WireError(std::string("field '") + key + "' must be a number");
  return it->get<double>();
}

Action parse_action(const std::string& text) {
  if (text == "start_recording") return Action::kStartRecording;
  if (text == "stop_recording") return Action::kStopRecording;
  if (text == "reset") return Action::kReset;
  if (text == "select_trajectory") return Action::kSelectTrajectory;
  throw WireError("unknown action '" + text + "'");
}

json points_json(const std::vector<Eigen::Vector2d>& points) {
  json out = json::array();
  for (const auto& p : points) out.push_back({p.x(), p.y()});
  return out;
}

json profile_json(const SpeedProfile& profile) {
  if (profile.is_constant()) {
    return {{"kind", "constant"}, {"speed", profile.intervals().front().speed}};
  }
  json intervals = json::array();
  for (const auto& i : profile.intervals()) intervals.push_back({i.end, i.speed});
  return {{"kind", "piecewise"},
          {"intervals", intervals},
          {"fractional", profile.fractional()},
          {"ramp", profile.ramp_length()}};
}

json trajectory_list(const std::vector<Trajectory>& trajectories) {
  json list = json::array();
  for (const Trajectory& t : trajectories) {
    double v_min = t.path[0].v, v_max = t.path[0].v;
    for (std::size_t i = 0; i < t.path.size(); ++i) {
      v_min = std::min(v_min, t.path[i].v);
      v_max = std::max(v_max, t.path[i].v);
    }
    json item = {{"id", t.id},
                 {"name", t.path.name()},
                 {"shape", t.shape},
                 {"closed", t.path.closed()},
                 {"length", t.path.length()},
                 {"samples", t.path.size()},
                 {"speed_min", v_min},
                 {"speed_max", v_max}};
    if (t.shape == "circle") {
      item["radius"] = t.radius;
      item["direction"] = t.direction;
    }
    list.push_back(std::move(item));
  }
  return list;
}

}  // namespace

ClientMessage parse_client_message(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw WireError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw WireError("message must be a JSON object");
  if (const auto v = j.find("v"); v != j.end()) {
    if (!v->is_number_integer() || v->get<int>() != kWireVersion) {
      throw WireError("unsupported wire version " + v->dump());
    }
  }
  const auto type = j.find("type");
  if (type == j.end() || !type->is_string()) throw WireError("missing string field 'type'");
  if (*type == "cmd") {
    CommandMessage m;
    m.steering = number_field(j, "steering");
    m.throttle = number_field(j, "throttle");
    if (j.contains("t")) m.client_time = number_field(j, "t");
    return m;
  }
  if (*type == "ctl") {
    const auto action = j.find("action");
    if (action == j.end() || !action->is_string()) throw WireError("missing string field 'action'");
    ControlMessage m;
    m.action = parse_action(action->get<std::string>());
    if (m.action == Action::kSelectTrajectory) {
      const auto id = j.find("id");
      if (id == j.end() || !id->is_string()) throw WireError("select_trajectory needs string 'id'");
      m.trajectory_id = id->get<std::string>();
    }
    return m;
  }
  throw WireError("unknown message type " + type->dump());
}

std::string to_json(const StateBroadcast& b) {
  const json j = {{"v", kWireVersion},
                  {"type", "state"},
                  {"session", b.session},
                  {"t", b.t},
                  {"x", b.state.x},
                  {"y", b.state.y},
                  {"theta", b.state.theta},
                  {"vel", b.state.v},
                  {"e", {b.error.e1, b.error.e2, b.error.e3, b.error.e4}},
                  {"steering", b.command.steering()},
                  {"throttle", b.command.throttle()},
                  {"ref", points_json(b.ref)},
                  {"recording", b.recording},
                  {"progress", b.progress},
                  {"traj", b.trajectory_id},
                  {"v_ref", b.v_ref},
                  {"ct_err", b.ct_err},
                  {"paused", b.paused},
                  {"samples", b.samples}};
  return j.dump();
}

std::string hello_json(const std::string& session, const std::vector<Trajectory>& trajectories,
                       const std::string& selected) {
  const json j = {{"v", kWireVersion},
                  {"type", "hello"},
                  {"session", session},
                  {"selected", selected},
                  {"trajectories", trajectory_list(trajectories)}};
  return j.dump();
}

std::string error_json(const std::string& message) {
  return json{{"v", kWireVersion}, {"type", "error"}, {"message", message}}.dump();
}

std::string trajectories_json(const std::vector<Trajectory>& trajectories) {
  json list = trajectory_list(trajectories);
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    list[i]["speed_profile"] = profile_json(trajectories[i].profile);
  }
  return list.dump();
}

// ---------------------------------------------------------------------------
// Session

Session::Session(std::vector<Trajectory> trajectories, HilConfig config, VehicleParams params,
                 double lookahead, std::string id)
    : trajectories_(std::move(trajectories)),
      config_(std::move(config)),
      params_(params),
      lookahead_(lookahead),
      id_(std::move(id)) {
  if (trajectories_.empty()) throw std::invalid_argument("HIL session needs at least one trajectory");
  for (std::size_t i = 0; i < trajectories_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (trajectories_[i].id == trajectories_[j].id) {
        throw std::invalid_argument("duplicate trajectory id '" + trajectories_[i].id + "'");
      }
    }
  }
  config_.validate();
  params_.validate();
  if (!(lookahead_ >= 0.0)) throw std::invalid_argument("lookahead must be >= 0");
  reset_vehicle();
}

void Session::reset_vehicle() {
  const ReferenceSample& start = selected().path[0];
  state_ = {start.x, start.y, start.theta, 0.0};
  command_ = Command(0.0, 0.0);
  progress_ = 0.0;
  last_closest_ = 0;
}

void Session::client_connected() { ++clients_; }

void Session::client_disconnected() {
  if (clients_ > 0) --clients_;
  if (clients_ == 0) command_ = Command(command_.steering(), 0.0);
}

void Session::handle(const ClientMessage& message) {
  if (const auto* cmd = std::get_if<CommandMessage>(&message)) {
    command_ = Command(cmd->steering, cmd->throttle);
    last_command_t_ = t_;
    return;
  }
  const auto& ctl = std::get<ControlMessage>(message);
  switch (ctl.action) {
    case Action::kStartRecording:
      if (!recording_) {
        recording_ = true;
        next_record_ = config_.tick_hz - config_.record_hz;  // record on the next tick
      }
      break;
    case Action::kStopRecording:
      recording_ = false;
      break;
    case Action::kReset:
      reset_vehicle();
      break;
    case Action::kSelectTrajectory: {
      const auto it = std::find_if(trajectories_.begin(), trajectories_.end(),
                                   [&](const Trajectory& t) { return t.id == ctl.trajectory_id; });
      if (it == trajectories_.end()) throw WireError("unknown trajectory '" + ctl.trajectory_id + "'");
      selected_ = static_cast<std::size_t>(it - trajectories_.begin());
      reset_vehicle();
      break;
    }
  }
}

Command Session::applied_command() const {
  if (paused() || t_ - last_command_t_ > config_.deadman_seconds) {
    return Command(command_.steering(), 0.0);
  }
  return command_;
}

std::optional<StateBroadcast> Session::tick() {
  // Rates are compared through integer-valued accumulators so 50/20/10 Hz stay exact.
  if (!paused()) {
    const ReferencePath& path = selected().path;
    const Command u = applied_command();
    const ClosestPoint cp = closest_point(path, {state_.x, state_.y});
    double moved = path.advance(last_closest_, cp.index);
    if (path.closed() && moved > 0.5 * path.length()) moved -= path.length();
    progress_ += moved;
    last_closest_ = cp.index;

    if (recording_) {
      next_record_ += config_.record_hz;
      if (next_record_ >= config_.tick_hz) {
        next_record_ -= config_.tick_hz;
        samples_.push_back({lookahead_error(path, state_, cp.index, lookahead_), u,
                            SampleSource::kHil, selected().id, t_});
        log_.push_back({t_, selected().id, state_, cp.index});
      }
    }
    const double dt = 1.0 / config_.tick_hz;
    state_ = step(state_, u, dt, params_);
    ++ticks_;
    t_ = static_cast<double>(ticks_) * dt;
  }
  next_broadcast_ += config_.broadcast_hz;
  if (next_broadcast_ < config_.tick_hz) return std::nullopt;
  next_broadcast_ -= config_.tick_hz;
  return snapshot();
}

StateBroadcast Session::snapshot() const {
  const ReferencePath& path = selected().path;
  const ClosestPoint cp = closest_point(path, {state_.x, state_.y});
  StateBroadcast b;
  b.session = id_;
  b.t = t_;
  b.state = state_;
  b.error = lookahead_error(path, state_, cp.index, lookahead_);
  b.command = applied_command();
  b.recording = recording_;
  const double length = path.length();
  b.progress = length > 0.0 ? std::fmod(std::max(0.0, progress_), length) / length : 0.0;
  b.trajectory_id = selected().id;
  b.v_ref = cp.sample.v;
  b.ct_err = cp.distance;
  b.paused = paused();
  b.samples = samples_.size();

  const std::size_t n = path.size();
  const double spacing = length / static_cast<double>(path.closed() ? n : n - 1);
  const auto span = static_cast<std::size_t>(std::ceil(config_.ref_window_m / spacing));
  const std::size_t stride =
      std::max<std::size_t>(1, (span + config_.max_ref_points - 2) / (config_.max_ref_points - 1));
  for (std::size_t k = 0; k <= span && b.ref.size() < config_.max_ref_points; k += stride) {
    std::size_t i = cp.index + k;
    if (path.closed()) {
      i %= n;
    } else if (i >= n) {
      break;
    }
    b.ref.push_back(path[i].position());
  }
  return b;
}

// ---------------------------------------------------------------------------
// Files

SessionFiles finalize_session(const Session& session, const std::filesystem::path& dir) {
  if (session.samples().empty()) {
    throw std::runtime_error("HIL session '" + session.id() + "' has no recorded samples");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir.string() + "': " + ec.message());

  SessionFiles files;
  const std::string stem = "hil_" + session.id();
  files.dataset = dir / (stem + ".csv");
  files.meta = dir / (stem + ".meta.json");
  files.states = dir / (stem + ".states.csv");

  write_dataset_csv(Dataset(session.samples()), files.dataset);

  std::vector<std::string> ids;
  for (const Sample& s : session.samples()) {
    if (std::find(ids.begin(), ids.end(), s.traj_id) == ids.end()) ids.push_back(s.traj_id);
  }
  const json meta = {{"session", session.id()},
                     {"source", "hil"},
                     {"trajectories", ids},
                     {"samples", session.samples().size()},
                     {"record_hz", session.config().record_hz},
                     {"tick_hz", session.config().tick_hz},
                     {"lookahead", session.lookahead()},
                     {"dataset", files.dataset.filename().string()},
                     {"states", files.states.filename().string()}};
  {
    std::ofstream out(files.meta);
    out << meta.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing '" + files.meta.string() + "'");
  }
  {
    std::ofstream out(files.states);
    out << "t,traj_id,x,y,theta,v,ref_idx\n";
    for (const StateLogEntry& e : session.state_log()) {
      out << csv::join({csv::format(e.t), e.trajectory_id, csv::format(e.state.x),
                        csv::format(e.state.y), csv::format(e.state.theta), csv::format(e.state.v),
                        std::to_string(e.closest)})
          << '\n';
    }
    if (!out) throw std::runtime_error("failed writing '" + files.states.string() + "'");
  }
  return files;
}

std::vector<StateLogEntry> read_state_log(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open state log '" + file.string() + "'");
  std::string line;
  if (!std::getline(in, line) || csv::trim_line(line) != "t,traj_id,x,y,theta,v,ref_idx") {
    throw std::runtime_error(file.string() + ":1: unexpected state log header");
  }
  std::vector<StateLogEntry> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = csv::trim_line(line);
    if (view.empty()) continue;
    const auto f = csv::split(view);
    try {
      if (f.size() != 7) throw std::invalid_argument("wrong field count");
      StateLogEntry e;
      e.t = csv::parse_double(f[0]);
      e.trajectory_id = std::string(f[1]);
      e.state = {csv::parse_double(f[2]), csv::parse_double(f[3]), csv::parse_double(f[4]),
                 csv::parse_double(f[5])};
      e.closest = static_cast<std::size_t>(csv::parse_int(f[6]));
      out.push_back(std::move(e));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace zst::hil
