#include <random>

#include <benchmark/benchmark.h>

#include "zst/harness.hpp"

using namespace zst;

namespace {

void BM_Step(benchmark::State& state) {
  const VehicleParams p;
  VehicleState q{0, 0, 0, 1};
  for (auto _ : state) {
    q = step(q, Command(0.3, 0.4), 0.01, p);
    benchmark::DoNotOptimize(q);
  }
}
BENCHMARK(BM_Step);

void BM_MpcSolve(benchmark::State& state) {
  const VehicleParams p;
  MpcConfig cfg;
  cfg.horizon_N = static_cast<std::size_t>(state.range(0));
  const auto path = make_evaluation_course(SpeedProfile::constant(1.0));
  const auto window = reference_window(path, 100, cfg.horizon_N, cfg.dt);
  const ErrorState e0{0.1, 0.3, 0.05, 0.1};
  for (auto _ : state) benchmark::DoNotOptimize(mpc_solve(e0, window, cfg, p));
}
BENCHMARK(BM_MpcSolve)->Arg(10)->Arg(20)->Arg(40);

void BM_ClosestPoint(benchmark::State& state) {
  const auto path = make_evaluation_course(SpeedProfile::constant(1.0));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-40.0, 40.0);
  const Eigen::Vector2d q(U(rng), U(rng));
  for (auto _ : state) benchmark::DoNotOptimize(closest_point(path, q));
}
BENCHMARK(BM_ClosestPoint);

void BM_ClosestPointNear(benchmark::State& state) {
  const auto path = make_evaluation_course(SpeedProfile::constant(1.0));
  const Eigen::Vector2d q = path[500].position() + Eigen::Vector2d(0.1, -0.2);
  for (auto _ : state) benchmark::DoNotOptimize(closest_point_near(path, q, 495));
}
BENCHMARK(BM_ClosestPointNear);

NetworkParams random_network() {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> N(0.0, 0.3);
  NetworkParams p = NetworkParams::zeros(32, 32);
  Eigen::VectorXd flat = p.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = N(rng);
  p.unflatten(flat);
  return p;
}

void BM_NnForward(benchmark::State& state) {
  const Model m{random_network(), Normalization{}};
  const ErrorState e{1.8, 0.2, 0.1, 0.05};
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, e));
}
BENCHMARK(BM_NnForward);

void BM_NnBatchGradient(benchmark::State& state) {
  const NetworkParams p = random_network();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(state.range(0));
  Eigen::MatrixXd x(4, n), y(2, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    x.col(c) << N(rng), N(rng), N(rng), N(rng);
    y.col(c) << 0.2 * N(rng), 0.2;
  }
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(p, x, y));
}
BENCHMARK(BM_NnBatchGradient)->Arg(64)->Arg(256);

void BM_EkfCycle(benchmark::State& state) {
  const VehicleParams p;
  const NoiseConfig n;
  EkfState s;
  s.mean = {0, 0, 0, 1};
  s.covariance = Eigen::Matrix4d::Identity() * 0.01;
  for (auto _ : state) {
    s = ekf_predict(s, Command(0.1, 0.3), 0.01, p, n);
    s = ekf_update_heading(s, s.mean.theta, n);
    s = ekf_update_position(s, Eigen::Vector2d(s.mean.x, s.mean.y), n);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_EkfCycle);

void BM_ClosedLoopSecond(benchmark::State& state) {
  ScenarioConfig c;
  c.path.kind = PathKind::kCircle;
  c.duration = 1.0;
  const ReferencePath path = c.path.build();
  for (auto _ : state) {
    MpcController ctl(path, c.mpc, c.vehicle);
    benchmark::DoNotOptimize(run_scenario(c, path, ctl));
  }
}
BENCHMARK(BM_ClosedLoopSecond);

}  // namespace

BENCHMARK_MAIN();
