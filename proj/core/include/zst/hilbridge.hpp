#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "zst/config.hpp"
#include "zst/control.hpp"
#include "zst/imitation.hpp"
#include "zst/paths.hpp"

namespace zst::hil {

inline constexpr int kWireVersion = 1;

/// A selectable reference trajectory with the metadata served by GET /trajectories.
struct Trajectory {
  std::string id;
  std::string shape;  ///< circle | line | course
  double radius = 0.0;
  std::string direction;  ///< ccw | cw | "" for lines
  SpeedProfile profile = SpeedProfile::constant(1.0);
  ReferencePath path;
};

/// The seven training trajectories with stable ids (e.g. `circle_r5_ccw`, `line_30`).
std::vector<Trajectory> training_trajectories(bool multi_speed = false);

// ---------------------------------------------------------------------------
// Wire format

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommandMessage {
  double steering = 0.0;  ///< raw wire value, clamped when applied
  double throttle = 0.0;
  std::optional<double> client_time;
};

enum class Action { kStartRecording, kStopRecording, kReset, kSelectTrajectory };

struct ControlMessage {
  Action action = Action::kReset;
  std::string trajectory_id;  ///< for kSelectTrajectory
};

using ClientMessage = std::variant<CommandMessage, ControlMessage>;

/// Parses one client frame. Throws WireError for malformed JSON, an unknown type or
/// action, a version other than 1, or non-numeric command fields.
ClientMessage parse_client_message(const std::string& text);

struct StateBroadcast {
  std::string session;
  double t = 0.0;
  VehicleState state;
  ErrorState error;
  Command command;
  std::vector<Eigen::Vector2d> ref;  ///< upcoming reference points, at most max_ref_points
  bool recording = false;
  double progress = 0.0;  ///< fraction of the trajectory length covered, [0, 1)
  std::string trajectory_id;
  double v_ref = 0.0;
  double ct_err = 0.0;
  bool paused = false;
  std::size_t samples = 0;
};

std::string to_json(const StateBroadcast& b);
std::string hello_json(const std::string& session, const std::vector<Trajectory>& trajectories,
                       const std::string& selected);
std::string error_json(const std::string& message);
std::string trajectories_json(const std::vector<Trajectory>& trajectories);

// ---------------------------------------------------------------------------
// Session logic, driven by a ticker

/// True state at every recorded sample, for offline recomputation of the error states.
struct StateLogEntry {
  double t = 0.0;
  std::string trajectory_id;
  VehicleState state;
  std::size_t closest = 0;
};

/// Single-owner simulation of one HIL session. Not thread-safe; the server calls
/// it from its ticker thread only.
class Session {
 public:
  Session(std::vector<Trajectory> trajectories, HilConfig config, VehicleParams params,
          double lookahead, std::string id);

  void client_connected();
  void client_disconnected();
  std::size_t clients() const { return clients_; }
  bool paused() const { return clients_ == 0; }

  /// Applies a client message. Throws WireError for an unknown trajectory id.
  void handle(const ClientMessage& message);

  /// Advances one tick (unless paused) and returns a broadcast when one is due.
  std::optional<StateBroadcast> tick();

  double time() const { return t_; }
  std::uint64_t ticks() const { return ticks_; }
  const VehicleState& state() const { return state_; }
  Command applied_command() const;
  bool recording() const { return recording_; }
  const std::string& id() const { return id_; }
  const Trajectory& selected() const { return trajectories_[selected_]; }
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  const std::vector<Sample>& samples() const { return samples_; }
  const std::vector<StateLogEntry>& state_log() const { return log_; }
  double lookahead() const { return lookahead_; }
  const HilConfig& config() const { return config_; }

  StateBroadcast snapshot() const;

 private:
  void reset_vehicle();

  std::vector<Trajectory> trajectories_;
  HilConfig config_;
  VehicleParams params_;
  double lookahead_;
  std::string id_;

  std::size_t selected_ = 0;
  VehicleState state_;
  Command command_;
  double last_command_t_ = -1e300;
  double t_ = 0.0;
  std::uint64_t ticks_ = 0;
  double next_broadcast_ = 0.0;
  double next_record_ = 0.0;
  double progress_ = 0.0;
  std::size_t last_closest_ = 0;
  std::size_t clients_ = 0;
  bool recording_ = false;
  std::vector<Sample> samples_;
  std::vector<StateLogEntry> log_;
};

struct SessionFiles {
  std::filesystem::path dataset;  ///< imitation dataset CSV, source=hil
  std::filesystem::path meta;     ///< JSON: session id, trajectory ids, counts, rates
  std::filesystem::path states;   ///< recorded true states
};

/// Writes `<dir>/hil_<session>.csv` plus `.meta.json` and `.states.csv` sidecars.
/// Throws std::runtime_error for an empty session or a write failure.
SessionFiles finalize_session(const Session& session, const std::filesystem::path& dir);

/// Reads a `.states.csv` sidecar.
std::vector<StateLogEntry> read_state_log(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Network server

/// Websocket `/drive` plus `GET /trajectories` on one port. A ticker thread owns the
/// session; one network thread runs socket I/O. They exchange messages through
/// queues and the ticker never waits on the network.
class Server {
 public:
  explicit Server(std::unique_ptr<Session> session);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts both threads. Throws std::runtime_error when the address is
  /// unusable or the port is taken. Port 0 picks a free port.
  void start();
  unsigned short port() const;
  /// Stops both threads; the session is left intact for finalize_session.
  void stop();
  bool running() const;

  /// Runs `fn` on the session between ticks; blocks for at most one tick.
  void with_session(const std::function<void(Session&)>& fn);
  /// Only valid after stop().
  const Session& session() const;

  struct Impl;  // defined with the network code

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace zst::hil
