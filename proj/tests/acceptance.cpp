// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "zst/config.hpp"
#include "zst/harness.hpp"

using namespace zst;

namespace {

const std::filesystem::path kFixtures = ZST_FIXTURE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome a1_circle_radius() {
  const VehicleParams p;
  double worst = 0.0;
  for (double delta : {0.2, 0.5, 1.0, -0.6}) {
    const double R = p.wheelbase_l / std::tan(p.beta * delta);
    const double dt = 0.01;
    const int steps = static_cast<int>(std::ceil(2.0 * std::numbers::pi * std::abs(R) / dt));
    VehicleState q{0, 0, 0, 1};
    for (int i = 0; i < steps; ++i) {
      q = step(q, Command(delta, 0.0), dt, p);
      worst = std::max(worst, std::abs(std::hypot(q.x, q.y - R) - std::abs(R)) / std::abs(R));
    }
  }
  return {worst <= 1e-6, fmt("max relative radius error %.3g (limit 1e-6)", worst)};
}

Outcome a2_norm_preservation() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    const VehicleState q{10 * U(rng), 10 * U(rng), std::numbers::pi * U(rng), 1.5 + U(rng)};
    const ReferenceSample r{10 * U(rng), 10 * U(rng), std::numbers::pi * U(rng), 1.5 + U(rng), 0.0};
    const ErrorState e = error_state(q, r);
    const double d2 = (r.x - q.x) * (r.x - q.x) + (r.y - q.y) * (r.y - q.y);
    worst = std::max(worst, std::abs(e.e1 * e.e1 + e.e2 * e.e2 - d2) / std::max(1.0, d2));
  }
  return {worst <= 1e-12, fmt("max deviation %.3g over 1e5 pairs (limit 1e-12)", worst)};
}

double a3a_linearization() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const VehicleParams p;
  const double dt = 0.1, h = 1e-6;
  double worst = 0.0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
  for (int k = 0; k < 1000; ++k) {
    const double v = 1.55 + 1.45 * U(rng);
    const double vr = v + 0.3 * U(rng);
    const Eigen::Vector4d e(U(rng), U(rng), 0.5 * U(rng), vr - v);
    const Command u(0.9 * U(rng), 0.5 + 0.5 * U(rng));
    const ReferenceSample ref{0, 0, 0, vr, 0};
    const double curvature = 0.2 * U(rng);
    const auto lin = linearize(ErrorState::from_vector(e), u, ref, dt, p);
    auto f = [&](const Eigen::Vector4d& x, const Command& c) {
      return error_derivative(x, c, ref, curvature, 0.0, p);
    };
    for (int j = 0; j < 4; ++j) {
      Eigen::Vector4d ep = e, em = e;
      ep[j] += h;
      em[j] -= h;
      const Eigen::Vector4d fd = (f(ep, u) - f(em, u)) / (2 * h);
      for (int i = 0; i < 4; ++i) worst = std::max(worst, rel((lin.A(i, j) - (i == j)) / dt, fd[i]));
    }
    for (int j = 0; j < 2; ++j) {
      Eigen::Vector2d up = u.as_vector(), um = u.as_vector();
      up[j] += h;
      um[j] -= h;
      const Eigen::Vector4d fd = (f(e, Command(up[0], up[1])) - f(e, Command(um[0], um[1]))) / (2 * h);
      for (int i = 0; i < 4; ++i) worst = std::max(worst, rel(lin.B(i, j) / dt, fd[i]));
    }
  }
  return worst;
}

// Independent scalar forward pass of the tanh regressor, MSE over all outputs.
double oracle_loss(const NetworkParams& p, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  double total = 0.0;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<double> a(x.col(c).data(), x.col(c).data() + 4);
    for (int layer = 0; layer < 3; ++layer) {
      std::vector<double> z(static_cast<std::size_t>(p.weights[layer].rows()));
      for (Eigen::Index i = 0; i < p.weights[layer].rows(); ++i) {
        double s = p.biases[layer][i];
        for (Eigen::Index j = 0; j < p.weights[layer].cols(); ++j) s += p.weights[layer](i, j) * a[j];
        z[i] = layer < 2 ? std::tanh(s) : s;
      }
      a = z;
    }
    const double steering = std::tanh(a[0]);
    const double throttle = 1.0 / (1.0 + std::exp(-a[1]));
    total += (steering - y(0, c)) * (steering - y(0, c)) + (throttle - y(1, c)) * (throttle - y(1, c));
  }
  return total / static_cast<double>(y.size());
}

double a3b_backprop() {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  NetworkParams p = NetworkParams::zeros(8, 8);
  Eigen::VectorXd flat = p.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = 0.5 * N(rng);
  p.unflatten(flat);
  Eigen::MatrixXd x(4, 25), y(2, 25);
  for (int c = 0; c < 25; ++c) {
    x.col(c) << N(rng), N(rng), N(rng), N(rng);
    y.col(c) << 2 * U(rng) - 1, U(rng);
  }
  const LossGradient lg = loss_and_gradient(p, x, y);
  double worst = std::abs(lg.loss - oracle_loss(p, x, y)) / std::max(1e-12, std::abs(lg.loss));
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    const double h = 1e-5;
    NetworkParams a = p, b = p;
    Eigen::VectorXd fa = flat, fb = flat;
    fa[i] += h;
    fb[i] -= h;
    a.unflatten(fa);
    b.unflatten(fb);
    const double fd = (oracle_loss(a, x, y) - oracle_loss(b, x, y)) / (2 * h);
    worst = std::max(worst, std::abs(fd - lg.gradient[i]) / std::max(std::abs(fd) + std::abs(lg.gradient[i]), 1e-8));
  }
  return worst;
}

Outcome a3_oracles() {
  const double lin = a3a_linearization();
  const double nn = a3b_backprop();
  return {lin < 1e-5 && nn < 1e-4,
          fmt("linearize max rel err %.3g (limit 1e-5); 4-8-8-2 backprop max rel err %.3g (limit 1e-4)", lin, nn)};
}

Outcome a4_mpc_contraction() {
  ScenarioConfig c;
  c.path.kind = PathKind::kCircle;
  c.path.radius = 5.0;
  c.path.spacing = 0.01;
  c.path.profile = SpeedProfile::constant(1.0);
  c.initial.lateral = 0.5;
  c.duration = 40.0;
  const RunTrace t = run_scenario(c);
  double entered = std::numeric_limits<double>::infinity();
  double worst_after = 0.0;
  for (std::size_t i = t.records.size(); i-- > 0;) {
    if (t.records[i].ct_err >= 0.05) break;
    entered = t.records[i].t;
  }
  for (const auto& r : t.records) {
    if (r.t >= 10.0) worst_after = std::max(worst_after, r.ct_err);
  }
  const bool ok = !t.flagged() && t.records.size() == 400 && entered <= 10.0;
  return {ok, fmt("below 0.05 m from t = %.1f s onward (limit 10 s); max after 10 s %.4f m over %.0f s", entered,
                  worst_after, t.records.back().t - 10.0 + 0.1)};
}

// ---------------------------------------------------------------------------
// Learned-controller criteria share trained models.

struct CourseResult {
  double mean = 0.0;
  double max = 0.0;
  double steering_tv = 0.0;
  bool flagged = false;
  std::vector<RunTrace> traces;
};

ScenarioConfig course_scenario(const SpeedProfile& profile, std::optional<double> corner_speed = std::nullopt) {
  ScenarioConfig c;
  c.path.kind = PathKind::kCourse;
  c.path.profile = profile;
  c.path.course.corner_speed = corner_speed;
  c.sensor = SensorMode::kNoisy;
  c.initial.lateral_jitter = 0.2;
  c.initial.heading_jitter = 0.05;
  c.repetitions = 5;
  c.seed = 5;
  c.duration = 400.0;
  c.stop_after_lap = true;
  return c;
}

CourseResult run_course(const ScenarioConfig& c, const std::function<std::unique_ptr<Controller>()>& make) {
  const ReferencePath path = c.path.build();
  CourseResult out;
  for (int r = 0; r < c.repetitions; ++r) {
    auto ctl = make();
    out.traces.push_back(run_scenario(c, path, *ctl, r));
    out.flagged = out.flagged || out.traces.back().flagged() || !out.traces.back().completed_lap;
    out.steering_tv += steering_total_variation(out.traces.back()) / c.repetitions;
  }
  const ErrorSummary s = evaluate(out.traces, path);
  out.mean = s.aggregate_mean;
  out.max = s.aggregate_max;
  return out;
}

Model train_on(const Dataset& d) { return train(d, TrainConfig{}).model; }

Model train_mpc_model(bool multi_speed) {
  const CollectConfig cc;
  const Dataset d = collect_mpc_dataset(make_training_set(multi_speed, cc.speed), VehicleParams{}, MpcConfig{},
                                        cc.run_seconds, cc.perturbation, cc.seed);
  return train_on(d);
}

struct Models {
  Model mpc_constant;
  Model hil_constant;
};

Outcome a5_zero_shot(const Models& m, CourseResult& nn_out, double& seconds) {
  const auto start = std::chrono::steady_clock::now();
  const ScenarioConfig c = course_scenario(SpeedProfile::constant(1.0));
  const ReferencePath path = c.path.build();
  const CourseResult mpc = run_course(c, [&] { return std::make_unique<MpcController>(path, c.mpc, c.vehicle); });
  nn_out = run_course(c, [&] { return std::make_unique<NnController>(m.mpc_constant); });
  seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = !nn_out.flagged && nn_out.mean <= 2.0 * mpc.mean && nn_out.max <= 1.0 && seconds < 60.0;
  return {ok, fmt("NN mean %.4f m vs MPC mean %.4f m (limit 2x); NN max %.3f m (limit 1 m); %.1f s incl. training",
                  nn_out.mean, mpc.mean, nn_out.max, seconds)};
}

Outcome a6_multi_speed(const Model& hil_multi) {
  const Model nn = train_mpc_model(true);
  const ScenarioConfig c = course_scenario(SpeedProfile::constant(2.0), 1.0);
  const ReferencePath path = c.path.build();
  const CourseResult r = run_course(c, [&] { return std::make_unique<NnController>(nn); });
  double worst = 0.0;
  std::size_t checked = 0;
  for (const RunTrace& t : r.traces) {
    for (const TraceRecord& rec : t.records) {
      if (path[rec.ref_idx].v != 2.0) continue;  // corners and their ramps
      worst = std::max(worst, std::abs(rec.truth.v - 2.0));
      ++checked;
    }
  }
  // HIL pathway: fixture dataset -> model -> closed loop -> metrics.
  const CourseResult h = run_course(c, [&] { return std::make_unique<NnController>(hil_multi); });
  bool hil_ok = h.traces.size() == 5 && std::isfinite(h.mean) && std::isfinite(h.steering_tv);
  for (const RunTrace& t : h.traces) hil_ok = hil_ok && !t.records.empty();
  const bool ok = !r.flagged && checked > 0 && worst <= 0.3 && hil_ok;
  std::string detail = fmt("max |v - 2| on v_r = 2 points %.3f m/s over %.0f records (limit 0.3)", worst,
                           static_cast<double>(checked));
  detail += hil_ok ? "; HIL pathway ran end-to-end" : "; HIL pathway FAILED";
  detail += fmt(" (HIL-data NN mean %.3f m)", h.mean);
  return {ok, detail};
}

std::string slurp(const std::filesystem::path& f) {
  std::ifstream in(f, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome a7_determinism(const Model& nn) {
  const auto dir = std::filesystem::temp_directory_path() / "zst_acceptance_a7";
  std::filesystem::create_directories(dir);
  ScenarioConfig c = course_scenario(SpeedProfile::constant(1.0));
  c.duration = 60.0;
  c.stop_after_lap = false;
  c.seed = 123;
  const ReferencePath path = c.path.build();
  bool same = true;
  int files = 0;
  for (int kind = 0; kind < 2; ++kind) {
    for (int rep = 0; rep < 2; ++rep) {
      for (int copy = 0; copy < 2; ++copy) {
        std::unique_ptr<Controller> ctl;
        if (kind == 0) {
          ctl = std::make_unique<MpcController>(path, c.mpc, c.vehicle);
        } else {
          ctl = std::make_unique<NnController>(nn);
        }
        write_trace_csv(run_scenario(c, path, *ctl, rep), dir / ("t" + std::to_string(copy) + ".csv"), true);
      }
      same = same && slurp(dir / "t0.csv") == slurp(dir / "t1.csv") && !slurp(dir / "t0.csv").empty();
      files += 2;
    }
  }
  const Dataset d1 = collect_mpc_dataset(make_training_set(false), VehicleParams{}, MpcConfig{}, 10.0, Perturbation{}, 9);
  const Dataset d2 = collect_mpc_dataset(make_training_set(false), VehicleParams{}, MpcConfig{}, 10.0, Perturbation{}, 9);
  write_dataset_csv(d1, dir / "d0.csv");
  write_dataset_csv(d2, dir / "d1.csv");
  same = same && slurp(dir / "d0.csv") == slurp(dir / "d1.csv");
  std::filesystem::remove_all(dir);
  return {same, fmt("%.0f trace files and 2 dataset files compared byte for byte", files)};
}

Outcome a8_ekf_velocity() {
  int passed = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ScenarioConfig c;
    c.path.kind = PathKind::kCircle;
    c.path.radius = 5.0;
    c.path.profile = SpeedProfile::constant(1.0);
    c.sensor = SensorMode::kNoisy;
    c.initial_speed_estimate_scale = 0.5;
    c.duration = 30.0;
    c.seed = seed;
    const RunTrace t = run_scenario(c);
    double seed_worst = 0.0;
    for (const auto& r : t.records) {
      if (r.t >= 5.0) seed_worst = std::max(seed_worst, std::abs(r.estimate.v - r.truth.v) / r.truth.v);
    }
    worst = std::max(worst, seed_worst);
    if (!t.flagged() && t.records.size() == 300 && seed_worst <= 0.05) ++passed;
  }
  return {passed == 20, fmt("%.0f/20 seeds within 5%% from t = 5 s; worst %.2f%%", passed, 100.0 * worst)};
}

Outcome a9_trait_transfer(const Models& m, const CourseResult& mpc_nn) {
  const ScenarioConfig c = course_scenario(SpeedProfile::constant(1.0));
  const CourseResult hil = run_course(c, [&] { return std::make_unique<NnController>(m.hil_constant); });
  const bool ok = mpc_nn.mean <= hil.mean && hil.steering_tv < mpc_nn.steering_tv;
  return {ok, fmt("mean error MPC-data NN %.4f m <= HIL-data NN %.4f m; steering TV HIL-data %.2f < MPC-data %.2f",
                  mpc_nn.mean, hil.mean, hil.steering_tv, mpc_nn.steering_tv)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const char* id, const char* name, const Outcome& o) {
    std::printf("%s %-34s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };
  auto guarded = [&](const char* id, const char* name, const std::function<Outcome()>& fn) {
    try {
      report(id, name, fn());
    } catch (const std::exception& e) {
      report(id, name, Outcome{false, std::string("exception: ") + e.what()});
    }
  };

  guarded("A1", "dynamics circle radius", a1_circle_radius);
  guarded("A2", "error-state norm preservation", a2_norm_preservation);
  guarded("A3", "Jacobian and gradient oracles", a3_oracles);
  guarded("A4", "MPC closed-loop contraction", a4_mpc_contraction);

  Models models;
  double a5_seconds = 0.0;
  std::optional<Model> hil_multi;
  try {
    const auto start = std::chrono::steady_clock::now();
    models.mpc_constant = train_mpc_model(false);
    a5_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    models.hil_constant = train_on(ingest_hil_recording(kFixtures / "hil_constant.csv").data);
    hil_multi = train_on(ingest_hil_recording(kFixtures / "hil_multispeed.csv").data);
  } catch (const std::exception& e) {
    std::printf("model preparation failed: %s\n", e.what());
    for (const char* id : {"A5", "A6", "A7", "A9"}) std::printf("%s FAIL  models unavailable\n", id);
    guarded("A8", "EKF velocity convergence", a8_ekf_velocity);
    return 1;
  }

  CourseResult mpc_nn;
  guarded("A5", "zero-shot course generalization", [&] { return a5_zero_shot(models, mpc_nn, a5_seconds); });
  guarded("A6", "multi-speed tracking", [&] { return a6_multi_speed(*hil_multi); });
  guarded("A7", "determinism", [&] { return a7_determinism(models.mpc_constant); });
  guarded("A8", "EKF velocity convergence", a8_ekf_velocity);
  guarded("A9", "trait transfer MPC vs HIL data", [&] {
    if (mpc_nn.traces.empty()) return Outcome{false, "A5 runs unavailable"};
    return a9_trait_transfer(models, mpc_nn);
  });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED", failures);
  return failures == 0 ? 0 : 1;
}
