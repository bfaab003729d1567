#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "zst/control.hpp"
#include "zst/dynamics.hpp"
#include "zst/paths.hpp"

namespace zst {

enum class SampleSource { kMpc, kHil };

std::string to_string(SampleSource source);
SampleSource parse_sample_source(const std::string& text);

/// One (error state, command) training pair.
struct Sample {
  ErrorState e;
  Command u;
  SampleSource source = SampleSource::kMpc;
  std::string traj_id;
  double t = 0.0;

  bool operator==(const Sample&) const = default;
};

/// Per-input standardization. Zero-variance columns get std = 1.
struct Normalization {
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Vector4d stddev = Eigen::Vector4d::Ones();

  Eigen::Vector4d apply(const Eigen::Vector4d& e) const {
    return (e - mean).cwiseQuotient(stddev);
  }
  bool operator==(const Normalization&) const = default;
};

/// Training samples plus their input statistics, which are recomputed on every change.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Sample> samples);

  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const Normalization& normalization() const { return normalization_; }

  void add(Sample sample);
  void append(const Dataset& other);

  bool operator==(const Dataset& other) const { return samples_ == other.samples_; }

 private:
  void recompute();

  std::vector<Sample> samples_;
  Normalization normalization_;
};

/// Dataset CSV, header `e1,e2,e3,e4,steering,throttle,source,traj_id,t`.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& file);
Dataset read_dataset_csv(const std::filesystem::path& file);

struct IngestReport {
  Dataset data;
  std::size_t clamped_commands = 0;  ///< rows whose command was out of range
};

/// Reads a human-in-the-loop recording. Every sample is tagged as HIL, out-of-range
/// commands are clamped and counted, malformed rows raise std::runtime_error naming
/// the line.
IngestReport ingest_hil_recording(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Network

enum class Activation { kTanh, kRelu };
/// Output squashing: steering through tanh, throttle through the logistic sigmoid.
enum class OutputSquash { kTanhSigmoid };

std::string to_string(Activation a);
std::string to_string(OutputSquash o);

/// Weights of the 4 -> H1 -> H2 -> 2 regressor. weights[i] maps layer i to i + 1.
struct NetworkParams {
  std::array<int, 4> layer_sizes{4, 32, 32, 2};
  std::array<Eigen::MatrixXd, 3> weights;
  std::array<Eigen::VectorXd, 3> biases;
  Activation hidden = Activation::kTanh;
  OutputSquash output = OutputSquash::kTanhSigmoid;

  /// Zero weights with the given hidden widths.
  static NetworkParams zeros(int hidden1, int hidden2);
  /// Throws std::invalid_argument on shape mismatch or non-finite values.
  void validate() const;
  std::size_t parameter_count() const;

  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);
};

struct Model {
  NetworkParams params;
  Normalization normalization;
};

/// Network output for a batch of already-normalized inputs (4 x n) -> (2 x n).
Eigen::MatrixXd forward_batch(const NetworkParams& params, const Eigen::MatrixXd& inputs);

/// Normalizes e, evaluates the network and returns an in-range command.
Command forward(const NetworkParams& params, const ErrorState& e, const Normalization& norm);
inline Command forward(const Model& model, const ErrorState& e) {
  return forward(model.params, e, model.normalization);
}

/// Mean squared error over both outputs of a batch and its gradient, laid out like
/// NetworkParams::flatten().
struct LossGradient {
  double loss = 0.0;
  Eigen::VectorXd gradient;
};
LossGradient loss_and_gradient(const NetworkParams& params, const Eigen::MatrixXd& inputs,
                               const Eigen::MatrixXd& targets);

struct TrainConfig {
  int epochs = 150;
  int batch_size = 64;
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  double validation_fraction = 0.1;
  int hidden1 = 32;
  int hidden2 = 32;
  Activation hidden = Activation::kTanh;

  void validate() const;
};

struct TrainResult {
  Model model;
  std::vector<double> train_loss;       ///< per epoch, over the training split
  std::vector<double> validation_loss;  ///< per epoch, over the held-out split
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(int epoch)
      : std::runtime_error("training loss became non-finite at epoch " + std::to_string(epoch)),
        epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Mini-batch Adam on the MSE loss. Deterministic for a given seed and dataset.
TrainResult train(const Dataset& data, const TrainConfig& cfg);

/// Mean squared error of the model over a dataset's samples (raw command units).
double evaluate_mse(const Model& model, const std::vector<Sample>& samples);

/// Text model file: version line, layer sizes, activation tags, normalization,
/// then row-major weights and biases. Values round-trip exactly.
void save_model(const Model& model, const std::filesystem::path& file);
Model load_model(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Collection

/// Initial-state offsets drawn uniformly from +-range at the start of every episode.
struct Perturbation {
  double lateral = 1.0;   ///< m
  double heading = 0.3;   ///< rad
  double speed = 0.5;     ///< m/s
  /// Episode length in seconds; each run is split into episodes with fresh offsets.
  /// Zero means a single episode per trajectory.
  double episode_seconds = 10.0;
};

struct CollectOptions {
  double control_hz = 10.0;
  double plant_hz = 100.0;
  double lookahead = 2.0;  ///< feature reference distance ahead of the closest point, m
};

/// Closed-loop MPC rollouts on each trajectory, recording (feature error, command)
/// at the control rate. Solver failures are rethrown naming the trajectory.
Dataset collect_mpc_dataset(const std::vector<ReferencePath>& trajectories,
                            const VehicleParams& p, const MpcConfig& mpc, double run_seconds,
                            const Perturbation& perturbation, std::uint64_t seed,
                            const CollectOptions& options = {});

/// Default training trajectories: circles of radius 2, 5 and 25 m in both
/// directions plus a 30 m line. `multi_speed` switches every profile to 1 m/s for
/// the first half and 2 m/s for the second.
SpeedProfile training_profile(bool multi_speed, double speed = 1.0);
std::vector<ReferencePath> make_training_set(bool multi_speed = false, double speed = 1.0,
                                             double spacing = kDefaultSpacing);

}  // namespace zst
