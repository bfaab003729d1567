#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "zst/hilbridge.hpp"

#ifdef ZST_HAVE_SYNTHDRIVER
#include "synthetic_driver.hpp"
#endif

using namespace zst;
using namespace zst::hil;
using nlohmann::json;

namespace {

const std::filesystem::path kFixtures = ZST_FIXTURE_DIR;

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("zst_test_hil_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::string slurp(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Session make_session(bool multi = false, HilConfig cfg = {}) {
  return Session(training_trajectories(multi), cfg, VehicleParams{}, 2.0, "test");
}

ControlMessage ctl(Action a, std::string id = {}) { return ControlMessage{a, std::move(id)}; }

CommandMessage cmd(double steering, double throttle) { return CommandMessage{steering, throttle, std::nullopt}; }

int run_ticks(Session& s, int n) {
  int broadcasts = 0;
  for (int i = 0; i < n; ++i) broadcasts += s.tick().has_value() ? 1 : 0;
  return broadcasts;
}

}  // namespace

// ---------------------------------------------------------------------------
// Wire format

TEST(Wire, ParsesCommand) {
  const auto m = parse_client_message(R"({"v":1,"type":"cmd","steering":0.25,"throttle":0.5,"t":3.5})");
  const auto& c = std::get<CommandMessage>(m);
  EXPECT_EQ(c.steering, 0.25);
  EXPECT_EQ(c.throttle, 0.5);
  ASSERT_TRUE(c.client_time.has_value());
  EXPECT_EQ(*c.client_time, 3.5);
  const auto n = std::get<CommandMessage>(parse_client_message(R"({"type":"cmd","steering":-2,"throttle":7})"));
  EXPECT_EQ(n.steering, -2.0);  // raw, clamped on application
  EXPECT_FALSE(n.client_time.has_value());
}

TEST(Wire, ParsesControlActions) {
  EXPECT_EQ(std::get<ControlMessage>(parse_client_message(R"({"type":"ctl","action":"start_recording"})")).action,
            Action::kStartRecording);
  EXPECT_EQ(std::get<ControlMessage>(parse_client_message(R"({"type":"ctl","action":"stop_recording"})")).action,
            Action::kStopRecording);
  EXPECT_EQ(std::get<ControlMessage>(parse_client_message(R"({"type":"ctl","action":"reset"})")).action,
            Action::kReset);
  const auto sel = std::get<ControlMessage>(
      parse_client_message(R"({"v":1,"type":"ctl","action":"select_trajectory","id":"line_30"})"));
  EXPECT_EQ(sel.action, Action::kSelectTrajectory);
  EXPECT_EQ(sel.trajectory_id, "line_30");
}

TEST(Wire, RejectsBadMessages) {
  for (const char* text : {
           "{not json",
           "[1,2]",
           R"({"v":2,"type":"cmd","steering":0,"throttle":0})",
           R"({"v":"1","type":"cmd","steering":0,"throttle":0})",
           R"({"steering":0,"throttle":0})",
           R"({"type":"drive","steering":0,"throttle":0})",
           R"({"type":"cmd","steering":"left","throttle":0})",
           R"({"type":"cmd","throttle":0})",
           R"({"type":"cmd","steering":0,"throttle":0,"t":"now"})",
           R"({"type":"ctl"})",
           R"({"type":"ctl","action":"jump"})",
           R"({"type":"ctl","action":"select_trajectory"})",
       }) {
    EXPECT_THROW(parse_client_message(text), WireError) << text;
  }
}

TEST(Wire, StateBroadcastFields) {
  Session s = make_session();
  s.client_connected();
  const json j = json::parse(to_json(s.snapshot()));
  for (const char* key : {"v", "type", "session", "t", "x", "y", "theta", "vel", "e", "steering", "throttle",
                          "ref", "recording", "progress", "traj", "v_ref", "ct_err", "paused", "samples"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["v"], 1);
  EXPECT_EQ(j["type"], "state");
  EXPECT_EQ(j["session"], "test");
  EXPECT_EQ(j["e"].size(), 4u);
  EXPECT_LE(j["ref"].size(), HilConfig{}.max_ref_points);
  EXPECT_GE(j["ref"].size(), 2u);
  EXPECT_EQ(j["ref"][0].size(), 2u);
  EXPECT_EQ(j["traj"], s.selected().id);
}

TEST(Wire, ReferenceWindowRespectsLimits) {
  HilConfig cfg;
  cfg.max_ref_points = 5;
  cfg.ref_window_m = 3.0;
  Session s = make_session(false, cfg);
  const StateBroadcast b = s.snapshot();
  ASSERT_LE(b.ref.size(), 5u);
  ASSERT_GE(b.ref.size(), 2u);
  EXPECT_EQ(b.ref.front(), s.selected().path[0].position());
  // Consecutive points march forward along the path, within the window.
  EXPECT_LE((b.ref.back() - b.ref.front()).norm(), 3.0 + 1e-9);
}

TEST(Wire, HelloAndTrajectoryListing) {
  const auto trajs = training_trajectories(false);
  const json hello = json::parse(hello_json("abc", trajs, trajs[2].id));
  EXPECT_EQ(hello["type"], "hello");
  EXPECT_EQ(hello["selected"], trajs[2].id);
  EXPECT_EQ(hello["trajectories"].size(), 7u);

  const json list = json::parse(trajectories_json(trajs));
  ASSERT_TRUE(list.is_array());
  ASSERT_EQ(list.size(), 7u);
  std::set<std::string> ids;
  for (const auto& item : list) {
    ids.insert(item["id"].get<std::string>());
    EXPECT_TRUE(item.contains("speed_profile"));
    EXPECT_GT(item["length"].get<double>(), 0.0);
    if (item["shape"] == "circle") {
      EXPECT_TRUE(item["closed"].get<bool>());
      EXPECT_TRUE(item["direction"] == "ccw" || item["direction"] == "cw");
    }
  }
  EXPECT_EQ(ids.size(), 7u);
  EXPECT_TRUE(ids.count("line_30"));
  EXPECT_TRUE(ids.count("circle_r5_ccw"));

  const json multi = json::parse(trajectories_json(training_trajectories(true)));
  EXPECT_EQ(multi[0]["speed_profile"]["kind"], "piecewise");
  EXPECT_EQ(json::parse(error_json("boom"))["message"], "boom");
}

TEST(Wire, TrajectoryMetadata) {
  for (const auto& t : training_trajectories(false)) {
    if (t.shape == "circle") {
      const long r = std::lround(t.radius);
      EXPECT_NEAR(t.radius, static_cast<double>(r), 1e-9);
      EXPECT_NE(t.id.find("_r" + std::to_string(r) + "_" + t.direction), std::string::npos) << t.id;
    } else {
      EXPECT_EQ(t.shape, "line");
      EXPECT_FALSE(t.path.closed());
    }
  }
}

// ---------------------------------------------------------------------------
// Session

TEST(Session, RejectsBadConstruction) {
  EXPECT_THROW(Session({}, HilConfig{}, VehicleParams{}, 2.0, "x"), std::invalid_argument);
  auto dup = training_trajectories(false);
  dup.push_back(dup.front());
  EXPECT_THROW(Session(dup, HilConfig{}, VehicleParams{}, 2.0, "x"), std::invalid_argument);
  EXPECT_THROW(Session(training_trajectories(false), HilConfig{}, VehicleParams{}, -1.0, "x"),
               std::invalid_argument);
}

TEST(Session, IdleClientStaysAtRestAndBroadcastsContinue) {
  Session s = make_session();
  s.client_connected();
  const VehicleState start = s.state();
  EXPECT_EQ(start.v, 0.0);
  const int broadcasts = run_ticks(s, 500);  // 10 s
  EXPECT_EQ(broadcasts, 200);
  EXPECT_EQ(s.state(), start);
  EXPECT_NEAR(s.time(), 10.0, 1e-12);
}

TEST(Session, PausedWithoutClients) {
  Session s = make_session();
  EXPECT_TRUE(s.paused());
  s.handle(cmd(0.0, 1.0));
  run_ticks(s, 100);
  EXPECT_EQ(s.time(), 0.0);
  EXPECT_EQ(s.ticks(), 0u);
  EXPECT_TRUE(s.snapshot().paused);
}

TEST(Session, DisconnectPausesAndCutsThrottle) {
  Session s = make_session();
  s.client_connected();
  s.handle(cmd(0.3, 0.8));
  run_ticks(s, 10);
  EXPECT_GT(s.state().v, 0.0);
  s.client_disconnected();
  EXPECT_TRUE(s.paused());
  const double t = s.time();
  const VehicleState frozen = s.state();
  run_ticks(s, 100);
  EXPECT_EQ(s.time(), t);
  EXPECT_EQ(s.state(), frozen);
  s.client_connected();
  EXPECT_EQ(s.applied_command().throttle(), 0.0);
  s.client_disconnected();
  s.client_disconnected();  // extra disconnects are harmless
  EXPECT_EQ(s.clients(), 0u);
}

TEST(Session, DeadManCutsThrottleKeepsSteering) {
  Session s = make_session();
  s.client_connected();
  s.handle(cmd(0.4, 0.6));
  run_ticks(s, 25);  // exactly 0.5 s
  EXPECT_EQ(s.applied_command(), Command(0.4, 0.6));
  run_ticks(s, 1);
  EXPECT_EQ(s.applied_command(), Command(0.4, 0.0));
  const double v = s.state().v;
  run_ticks(s, 50);
  EXPECT_EQ(s.state().v, v);  // coasting, no torque
  s.handle(cmd(0.4, 0.6));
  EXPECT_EQ(s.applied_command(), Command(0.4, 0.6));
}

TEST(Session, ClampsCommands) {
  Session s = make_session();
  s.client_connected();
  s.handle(cmd(3.0, -1.0));
  EXPECT_EQ(s.applied_command(), Command(1.0, 0.0));
  s.handle(cmd(-3.0, 9.0));
  EXPECT_EQ(s.applied_command(), Command(-1.0, 1.0));
}

TEST(Session, RecordsTenHertz) {
  Session s = make_session();
  s.client_connected();
  s.handle(ctl(Action::kStartRecording));
  for (int i = 0; i < 3000; ++i) {
    if (i % 5 == 0) s.handle(cmd(0.0, 0.3));
    s.tick();
  }
  ASSERT_EQ(s.samples().size(), 600u);
  ASSERT_EQ(s.state_log().size(), 600u);
  for (std::size_t k = 0; k < s.samples().size(); ++k) {
    EXPECT_NEAR(s.samples()[k].t, 0.1 * static_cast<double>(k), 1e-9);
    EXPECT_EQ(s.samples()[k].source, SampleSource::kHil);
    EXPECT_EQ(s.samples()[k].traj_id, s.selected().id);
  }
  s.handle(ctl(Action::kStopRecording));
  run_ticks(s, 100);
  EXPECT_EQ(s.samples().size(), 600u);
}

TEST(Session, ResetKeepsRecording) {
  Session s = make_session();
  s.client_connected();
  s.handle(ctl(Action::kStartRecording));
  s.handle(cmd(0.5, 0.7));
  run_ticks(s, 50);
  const std::size_t before = s.samples().size();
  s.handle(ctl(Action::kReset));
  EXPECT_TRUE(s.recording());
  EXPECT_EQ(s.state().v, 0.0);
  EXPECT_EQ(s.state().x, s.selected().path[0].x);
  EXPECT_EQ(s.snapshot().progress, 0.0);
  run_ticks(s, 50);
  EXPECT_EQ(s.samples().size(), before + 10);
}

TEST(Session, SelectTrajectory) {
  Session s = make_session();
  s.client_connected();
  s.handle(cmd(0.2, 0.5));
  run_ticks(s, 50);
  s.handle(ctl(Action::kSelectTrajectory, "line_30"));
  EXPECT_EQ(s.selected().id, "line_30");
  EXPECT_EQ(s.state().v, 0.0);
  EXPECT_EQ(s.state().x, s.selected().path[0].x);
  EXPECT_THROW(s.handle(ctl(Action::kSelectTrajectory, "moon")), WireError);
  EXPECT_EQ(s.selected().id, "line_30");
}

TEST(Session, ProgressAdvancesAlongLine) {
  Session s = make_session();
  s.client_connected();
  s.handle(ctl(Action::kSelectTrajectory, "line_30"));
  for (int i = 0; i < 500; ++i) {
    if (i % 5 == 0) s.handle(cmd(0.0, 0.5));
    s.tick();
  }
  const StateBroadcast b = s.snapshot();
  EXPECT_GT(b.progress, 0.05);
  EXPECT_LT(b.progress, 1.0);
  EXPECT_NEAR(b.progress * s.selected().path.length(), s.state().x - s.selected().path[0].x, 0.1);
  EXPECT_LT(b.ct_err, 1e-9 + 0.05);
}

// ---------------------------------------------------------------------------
// Files

TEST(Finalize, EmptySessionIsAnError) {
  ScratchDir dir("empty");
  Session s = make_session();
  EXPECT_THROW(finalize_session(s, dir.path()), std::runtime_error);
}

TEST(Finalize, WriteFailureNamesPath) {
  ScratchDir dir("blocked");
  Session s = make_session();
  s.client_connected();
  s.handle(ctl(Action::kStartRecording));
  run_ticks(s, 10);
  const auto blocker = dir.path() / "file";
  std::ofstream(blocker) << "x";
  try {
    finalize_session(s, blocker / "sub");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find((blocker / "sub").string()), std::string::npos) << e.what();
  }
}

TEST(Finalize, WritesDatasetMetaAndStates) {
  ScratchDir dir("files");
  Session s = make_session();
  s.client_connected();
  s.handle(ctl(Action::kStartRecording));
  for (int i = 0; i < 500; ++i) {
    if (i % 5 == 0) s.handle(cmd(0.3, 0.4));
    s.tick();
  }
  const SessionFiles f = finalize_session(s, dir.path());
  EXPECT_EQ(f.dataset.filename(), "hil_test.csv");
  const Dataset d = read_dataset_csv(f.dataset);
  EXPECT_EQ(d.samples(), s.samples());
  const json meta = json::parse(slurp(f.meta));
  EXPECT_EQ(meta["samples"], 100);
  EXPECT_EQ(meta["session"], "test");
  EXPECT_EQ(meta["trajectories"].size(), 1u);
  const auto log = read_state_log(f.states);
  ASSERT_EQ(log.size(), s.state_log().size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(log[i].state, s.state_log()[i].state);
    EXPECT_EQ(log[i].closest, s.state_log()[i].closest);
  }
}

TEST(Finalize, StateLogReadErrors) {
  ScratchDir dir("statelog");
  EXPECT_THROW(read_state_log(dir.path() / "missing.csv"), std::runtime_error);
  std::ofstream(dir.path() / "bad.csv") << "t,traj_id,x,y,theta,v,ref_idx\n0,a,1,2\n";
  try {
    read_state_log(dir.path() / "bad.csv");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv:2"), std::string::npos) << e.what();
  }
}

// ---------------------------------------------------------------------------
// Shipped recordings

class Fixture : public ::testing::TestWithParam<std::string> {};

// Error states in the recording are reproducible from the logged true states.
TEST_P(Fixture, ErrorsRecomputeFromStateLog) {
  const bool multi = GetParam() == "multispeed";
  const Dataset d = read_dataset_csv(kFixtures / ("hil_" + GetParam() + ".csv"));
  const auto log = read_state_log(kFixtures / ("hil_" + GetParam() + ".states.csv"));
  const json meta = json::parse(slurp(kFixtures / ("hil_" + GetParam() + ".meta.json")));
  const double lookahead = meta["lookahead"].get<double>();
  ASSERT_EQ(d.size(), log.size());
  ASSERT_EQ(meta["samples"].get<std::size_t>(), d.size());
  const auto trajs = training_trajectories(multi);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto it = std::find_if(trajs.begin(), trajs.end(),
                                 [&](const Trajectory& t) { return t.id == log[i].trajectory_id; });
    ASSERT_NE(it, trajs.end()) << log[i].trajectory_id;
    const auto cp = closest_point(it->path, {log[i].state.x, log[i].state.y});
    ASSERT_EQ(cp.index, log[i].closest) << "row " << i;
    const ErrorState e = lookahead_error(it->path, log[i].state, cp.index, lookahead);
    const ErrorState& r = d.samples()[i].e;
    ASSERT_NEAR(e.e1, r.e1, 1e-9) << "row " << i;
    ASSERT_NEAR(e.e2, r.e2, 1e-9) << "row " << i;
    ASSERT_NEAR(e.e3, r.e3, 1e-9) << "row " << i;
    ASSERT_NEAR(e.e4, r.e4, 1e-9) << "row " << i;
    ASSERT_EQ(d.samples()[i].t, log[i].t);
  }
}

TEST_P(Fixture, CoversAllSevenTrajectories) {
  const Dataset d = read_dataset_csv(kFixtures / ("hil_" + GetParam() + ".csv"));
  std::set<std::string> ids;
  for (const auto& s : d.samples()) {
    ids.insert(s.traj_id);
    EXPECT_EQ(s.source, SampleSource::kHil);
  }
  EXPECT_EQ(ids.size(), 7u);
}

TEST_P(Fixture, IngestRoundTrip) {
  ScratchDir dir("ingest_" + GetParam());
  const IngestReport r = ingest_hil_recording(kFixtures / ("hil_" + GetParam() + ".csv"));
  EXPECT_EQ(r.clamped_commands, 0u);
  EXPECT_GT(r.data.size(), 3000u);
  write_dataset_csv(r.data, dir.path() / "copy.csv");
  EXPECT_EQ(read_dataset_csv(dir.path() / "copy.csv"), r.data);
  EXPECT_EQ(slurp(dir.path() / "copy.csv"), slurp(kFixtures / ("hil_" + GetParam() + ".csv")));
}

#ifdef ZST_HAVE_SYNTHDRIVER
// The shipped recordings are exactly what the scripted driver produces today.
TEST_P(Fixture, RegeneratesByteIdentically) {
  ScratchDir dir("regen_" + GetParam());
  const bool multi = GetParam() == "multispeed";
  const VehicleParams params;
  Session s(training_trajectories(multi), HilConfig{}, params, 2.0, GetParam());
  tools::drive_all(s, params, 60.0, 11);
  const SessionFiles f = finalize_session(s, dir.path());
  for (const auto& file : {f.dataset, f.meta, f.states}) {
    EXPECT_EQ(slurp(file), slurp(kFixtures / file.filename())) << file.filename();
  }
}
#endif

INSTANTIATE_TEST_SUITE_P(Recordings, Fixture, ::testing::Values("constant", "multispeed"));

TEST(Ingest, ClampsAndCountsOutOfRange) {
  ScratchDir dir("clamp");
  const auto file = dir.path() / "rec.csv";
  std::ofstream(file) << "e1,e2,e3,e4,steering,throttle,source,traj_id,t\n"
                      << "0,0,0,0,1.5,0.2,hil,a,0\n"
                      << "0,0,0,0,0.1,-0.1,hil,a,0.1\n"
                      << "0,0,0,0,0.1,0.2,hil,a,0.2\n";
  const IngestReport r = ingest_hil_recording(file);
  EXPECT_EQ(r.clamped_commands, 2u);
  EXPECT_EQ(r.data.samples()[0].u.steering(), 1.0);
  EXPECT_EQ(r.data.samples()[1].u.throttle(), 0.0);
  std::ofstream(file) << "e1,e2,e3,e4,steering,throttle,source,traj_id,t\n0,0,zero,0,0,0,hil,a,0\n";
  try {
    ingest_hil_recording(file);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}
