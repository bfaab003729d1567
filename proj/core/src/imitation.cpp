#include "zst/imitation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "zst/csv.hpp"

namespace zst {

std::string to_string(SampleSource source) { return source == SampleSource::kHil ? "hil" : "mpc"; }

SampleSource parse_sample_source(const std::string& text) {
  if (text == "mpc") return SampleSource::kMpc;
  if (text == "hil") return SampleSource::kHil;
  throw std::invalid_argument("unknown sample source '" + text + "'");
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(std::vector<Sample> samples) : samples_(std::move(samples)) { recompute(); }

void Dataset::add(Sample sample) {
  samples_.push_back(std::move(sample));
  recompute();
}

void Dataset::append(const Dataset& other) {
  samples_.insert(samples_.end(), other.samples_.begin(), other.samples_.end());
  recompute();
}

void Dataset::recompute() {
  normalization_ = Normalization{};
  if (samples_.empty()) return;
  const auto n = static_cast<double>(samples_.size());
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  for (const Sample& s : samples_) mean += s.e.as_vector();
  mean /= n;
  Eigen::Vector4d var = Eigen::Vector4d::Zero();
  for (const Sample& s : samples_) var += (s.e.as_vector() - mean).cwiseAbs2();
  var /= n;
  normalization_.mean = mean;
  for (int i = 0; i < 4; ++i) {
    const double sd = std::sqrt(var[i]);
    normalization_.stddev[i] = sd > 1e-12 ? sd : 1.0;
  }
}

namespace {

constexpr const char* kDatasetHeader = "e1,e2,e3,e4,steering,throttle,source,traj_id,t";

struct RawRow {
  std::array<double, 4> e{};
  double steering = 0.0;
  double throttle = 0.0;
  std::string source;
  std::string traj_id;
  double t = 0.0;
};

std::vector<std::pair<std::size_t, RawRow>> read_raw_rows(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open dataset '" + file.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(file.string() + ": empty file");
  if (csv::trim_line(line) != kDatasetHeader) {
    throw std::runtime_error(file.string() + ":1: expected header '" + kDatasetHeader + "'");
  }
  std::vector<std::pair<std::size_t, RawRow>> rows;
  std::vector<std::string> errors;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = csv::trim_line(line);
    if (view.empty()) continue;
    const auto fields = csv::split(view);
    try {
      if (fields.size() != 9) throw std::invalid_argument("expected 9 fields");
      RawRow row;
      for (int i = 0; i < 4; ++i) row.e[i] = csv::parse_double(fields[i]);
      row.steering = csv::parse_double(fields[4]);
      row.throttle = csv::parse_double(fields[5]);
      row.source = std::string(fields[6]);
      row.traj_id = std::string(fields[7]);
      row.t = csv::parse_double(fields[8]);
      const bool finite = std::all_of(row.e.begin(), row.e.end(),
                                      [](double v) { return std::isfinite(v); }) &&
                          std::isfinite(row.steering) && std::isfinite(row.throttle) &&
                          std::isfinite(row.t);
      if (!finite) throw std::invalid_argument("non-finite value");
      rows.emplace_back(line_no, std::move(row));
    } catch (const std::invalid_argument& e) {
      errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!errors.empty()) {
    std::string message = file.string() + ": " + std::to_string(errors.size()) + " malformed row(s)";
    for (std::size_t i = 0; i < errors.size() && i < 10; ++i) message += "\n  " + errors[i];
    throw std::runtime_error(message);
  }
  if (rows.empty()) throw std::runtime_error(file.string() + ": no samples");
  return rows;
}

}  // namespace

void write_dataset_csv(const Dataset& data, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open '" + file.string() + "' for writing");
  out << kDatasetHeader << '\n';
  for (const Sample& s : data.samples()) {
    out << csv::join({csv::format(s.e.e1), csv::format(s.e.e2), csv::format(s.e.e3),
                      csv::format(s.e.e4), csv::format(s.u.steering()),
                      csv::format(s.u.throttle()), to_string(s.source), s.traj_id,
                      csv::format(s.t)})
        << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + file.string() + "'");
}

Dataset read_dataset_csv(const std::filesystem::path& file) {
  std::vector<Sample> samples;
  for (auto& [line_no, row] : read_raw_rows(file)) {
    SampleSource source;
    try {
      source = parse_sample_source(row.source);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(file.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
    samples.push_back({ErrorState{row.e[0], row.e[1], row.e[2], row.e[3]},
                       Command(row.steering, row.throttle), source, row.traj_id, row.t});
  }
  return Dataset(std::move(samples));
}

IngestReport ingest_hil_recording(const std::filesystem::path& file) {
  IngestReport report;
  std::vector<Sample> samples;
  for (auto& [line_no, row] : read_raw_rows(file)) {
    if (row.steering < -1.0 || row.steering > 1.0 || row.throttle < 0.0 || row.throttle > 1.0) {
      ++report.clamped_commands;
    }
    samples.push_back({ErrorState{row.e[0], row.e[1], row.e[2], row.e[3]},
                       Command(row.steering, row.throttle), SampleSource::kHil, row.traj_id,
                       row.t});
  }
  report.data = Dataset(std::move(samples));
  return report;
}

// ---------------------------------------------------------------------------
// Network

std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }
std::string to_string(OutputSquash) { return "tanh_sigmoid"; }

namespace {

Activation parse_activation(const std::string& text) {
  if (text == "tanh") return Activation::kTanh;
  if (text == "relu") return Activation::kRelu;
  throw std::runtime_error("unknown hidden activation '" + text + "'");
}

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  if (a == Activation::kRelu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

// Derivative expressed through the activation output h.
Eigen::MatrixXd activation_slope(const Eigen::MatrixXd& h, Activation a) {
  if (a == Activation::kRelu) return (h.array() > 0.0).cast<double>().matrix();
  return (1.0 - h.array().square()).matrix();
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct ForwardPass {
  Eigen::MatrixXd h1;
  Eigen::MatrixXd h2;
  Eigen::MatrixXd out;
};

ForwardPass run_forward(const NetworkParams& params, const Eigen::MatrixXd& inputs) {
  ForwardPass pass;
  pass.h1 = activate((params.weights[0] * inputs).colwise() + params.biases[0], params.hidden);
  pass.h2 = activate((params.weights[1] * pass.h1).colwise() + params.biases[1], params.hidden);
  const Eigen::MatrixXd z3 = (params.weights[2] * pass.h2).colwise() + params.biases[2];
  pass.out.resize(2, z3.cols());
  for (Eigen::Index c = 0; c < z3.cols(); ++c) {
    pass.out(0, c) = std::tanh(z3(0, c));
    pass.out(1, c) = sigmoid(z3(1, c));
  }
  return pass;
}

}  // namespace

NetworkParams NetworkParams::zeros(int hidden1, int hidden2) {
  NetworkParams p;
  p.layer_sizes = {4, hidden1, hidden2, 2};
  for (int i = 0; i < 3; ++i) {
    p.weights[i] = Eigen::MatrixXd::Zero(p.layer_sizes[i + 1], p.layer_sizes[i]);
    p.biases[i] = Eigen::VectorXd::Zero(p.layer_sizes[i + 1]);
  }
  return p;
}

void NetworkParams::validate() const {
  if (layer_sizes[0] != 4 || layer_sizes[3] != 2) {
    throw std::invalid_argument("network must map 4 inputs to 2 outputs");
  }
  for (int i = 0; i < 3; ++i) {
    if (layer_sizes[i + 1] <= 0) throw std::invalid_argument("layer sizes must be positive");
    if (weights[i].rows() != layer_sizes[i + 1] || weights[i].cols() != layer_sizes[i] ||
        biases[i].size() != layer_sizes[i + 1]) {
      throw std::invalid_argument("layer " + std::to_string(i) + " shape mismatch");
    }
    if (!weights[i].allFinite() || !biases[i].allFinite()) {
      throw std::invalid_argument("layer " + std::to_string(i) + " has non-finite values");
    }
  }
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t count = 0;
  for (int i = 0; i < 3; ++i) {
    count += static_cast<std::size_t>(weights[i].size() + biases[i].size());
  }
  return count;
}

Eigen::VectorXd NetworkParams::flatten() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index offset = 0;
  for (int i = 0; i < 3; ++i) {
    // Row-major weight order, matching the model file.
    for (Eigen::Index r = 0; r < weights[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights[i].cols(); ++c) flat[offset++] = weights[i](r, c);
    }
    flat.segment(offset, biases[i].size()) = biases[i];
    offset += biases[i].size();
  }
  return flat;
}

void NetworkParams::unflatten(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw std::invalid_argument("flat parameter vector has the wrong length");
  }
  Eigen::Index offset = 0;
  for (int i = 0; i < 3; ++i) {
    for (Eigen::Index r = 0; r < weights[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights[i].cols(); ++c) weights[i](r, c) = flat[offset++];
    }
    biases[i] = flat.segment(offset, biases[i].size());
    offset += biases[i].size();
  }
}

Eigen::MatrixXd forward_batch(const NetworkParams& params, const Eigen::MatrixXd& inputs) {
  return run_forward(params, inputs).out;
}

Command forward(const NetworkParams& params, const ErrorState& e, const Normalization& norm) {
  const Eigen::MatrixXd x = norm.apply(e.as_vector());
  const Eigen::MatrixXd y = run_forward(params, x).out;
  return {y(0, 0), y(1, 0)};
}

LossGradient loss_and_gradient(const NetworkParams& params, const Eigen::MatrixXd& inputs,
                               const Eigen::MatrixXd& targets) {
  const ForwardPass pass = run_forward(params, inputs);
  const Eigen::MatrixXd residual = pass.out - targets;
  const double scale = 1.0 / static_cast<double>(residual.size());

  LossGradient result;
  result.loss = residual.squaredNorm() * scale;

  // Back through the output squashing.
  Eigen::MatrixXd delta3(2, residual.cols());
  for (Eigen::Index c = 0; c < residual.cols(); ++c) {
    const double steer = pass.out(0, c);
    const double throttle = pass.out(1, c);
    delta3(0, c) = 2.0 * scale * residual(0, c) * (1.0 - steer * steer);
    delta3(1, c) = 2.0 * scale * residual(1, c) * throttle * (1.0 - throttle);
  }
  const Eigen::MatrixXd delta2 =
      (params.weights[2].transpose() * delta3).cwiseProduct(activation_slope(pass.h2, params.hidden));
  const Eigen::MatrixXd delta1 =
      (params.weights[1].transpose() * delta2).cwiseProduct(activation_slope(pass.h1, params.hidden));

  NetworkParams grad = params;
  grad.weights[2] = delta3 * pass.h2.transpose();
  grad.biases[2] = delta3.rowwise().sum();
  grad.weights[1] = delta2 * pass.h1.transpose();
  grad.biases[1] = delta2.rowwise().sum();
  grad.weights[0] = delta1 * inputs.transpose();
  grad.biases[0] = delta1.rowwise().sum();
  result.gradient = grad.flatten();
  return result;
}

void TrainConfig::validate() const {
  if (epochs <= 0 || batch_size <= 0 || !(learning_rate > 0.0)) {
    throw std::invalid_argument("epochs, batch size and learning rate must be positive");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation fraction must lie in (0, 1)");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw std::invalid_argument("invalid Adam moment parameters");
  }
  if (hidden1 <= 0 || hidden2 <= 0) throw std::invalid_argument("hidden widths must be positive");
}

namespace {

void to_matrices(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices,
                 const Normalization& norm, Eigen::MatrixXd& inputs, Eigen::MatrixXd& targets) {
  const auto n = static_cast<Eigen::Index>(indices.size());
  inputs.resize(4, n);
  targets.resize(2, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Sample& s = samples[indices[static_cast<std::size_t>(c)]];
    inputs.col(c) = norm.apply(s.e.as_vector());
    targets.col(c) = s.u.as_vector();
  }
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() < 10) throw std::invalid_argument("training needs at least 10 samples");

  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  result.model.normalization = data.normalization();
  NetworkParams& params = result.model.params;
  params = NetworkParams::zeros(cfg.hidden1, cfg.hidden2);
  params.hidden = cfg.hidden;
  for (int i = 0; i < 3; ++i) {
    // Glorot-uniform weights, zero biases.
    const double limit = std::sqrt(6.0 / (params.layer_sizes[i] + params.layer_sizes[i + 1]));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    for (Eigen::Index r = 0; r < params.weights[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < params.weights[i].cols(); ++c) params.weights[i](r, c) = uniform(rng);
    }
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto validation_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::round(cfg.validation_fraction * static_cast<double>(data.size()))));
  std::vector<std::size_t> validation(order.end() - static_cast<std::ptrdiff_t>(validation_count), order.end());
  std::vector<std::size_t> training(order.begin(), order.end() - static_cast<std::ptrdiff_t>(validation_count));

  Eigen::MatrixXd train_x, train_y, val_x, val_y;
  to_matrices(data.samples(), training, data.normalization(), train_x, train_y);
  to_matrices(data.samples(), validation, data.normalization(), val_x, val_y);

  Eigen::VectorXd theta = params.flatten();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(theta.size());
  long long t = 0;
  std::vector<Eigen::Index> columns(static_cast<std::size_t>(train_x.cols()));
  std::iota(columns.begin(), columns.end(), 0);

  Eigen::MatrixXd batch_x, batch_y;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(columns.begin(), columns.end(), rng);
    for (std::size_t start = 0; start < columns.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(columns.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto count = static_cast<Eigen::Index>(end - start);
      batch_x.resize(4, count);
      batch_y.resize(2, count);
      for (Eigen::Index c = 0; c < count; ++c) {
        batch_x.col(c) = train_x.col(columns[start + static_cast<std::size_t>(c)]);
        batch_y.col(c) = train_y.col(columns[start + static_cast<std::size_t>(c)]);
      }
      params.unflatten(theta);
      const LossGradient lg = loss_and_gradient(params, batch_x, batch_y);
      if (!std::isfinite(lg.loss) || !lg.gradient.allFinite()) throw TrainingDiverged(epoch);
      ++t;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * lg.gradient;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * lg.gradient.cwiseAbs2();
      const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
      const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
      theta -= (cfg.learning_rate / bias1) *
               m.cwiseQuotient(((v / bias2).cwiseSqrt().array() + cfg.epsilon).matrix());
    }
    params.unflatten(theta);
    const double train_loss = (forward_batch(params, train_x) - train_y).squaredNorm() /
                              static_cast<double>(train_y.size());
    const double val_loss = (forward_batch(params, val_x) - val_y).squaredNorm() /
                            static_cast<double>(val_y.size());
    if (!std::isfinite(train_loss)) throw TrainingDiverged(epoch);
    result.train_loss.push_back(train_loss);
    result.validation_loss.push_back(val_loss);
  }
  params.unflatten(theta);
  return result;
}

double evaluate_mse(const Model& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw std::invalid_argument("no samples to evaluate");
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  Eigen::MatrixXd x, y;
  to_matrices(samples, all, model.normalization, x, y);
  return (forward_batch(model.params, x) - y).squaredNorm() / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------
// Model files

namespace {

constexpr const char* kModelMagic = "zst-mlp";
constexpr int kModelVersion = 1;

void write_row(std::ostream& out, const double* values, Eigen::Index count) {
  for (Eigen::Index i = 0; i < count; ++i) {
    if (i > 0) out << ' ';
    out << csv::format(values[i]);
  }
  out << '\n';
}

class ModelReader {
 public:
  ModelReader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  std::vector<std::string> line(const std::string& expected_key) {
    std::string text;
    if (!std::getline(in_, text)) fail("unexpected end of file, expected '" + expected_key + "'");
    ++line_no_;
    std::istringstream words(text);
    std::vector<std::string> tokens;
    for (std::string w; words >> w;) tokens.push_back(w);
    if (tokens.empty() || tokens.front() != expected_key) {
      fail("expected '" + expected_key + "'");
    }
    tokens.erase(tokens.begin());
    return tokens;
  }

  std::vector<double> numbers(const std::string& key, std::size_t count) {
    const auto tokens = line(key);
    if (tokens.size() != count) {
      fail("'" + key + "' needs " + std::to_string(count) + " values, found " +
           std::to_string(tokens.size()));
    }
    std::vector<double> values;
    for (const auto& t : tokens) {
      try {
        values.push_back(csv::parse_double(t));
      } catch (const std::invalid_argument& e) {
        fail(e.what());
      }
    }
    return values;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error(name_ + ":" + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::istream& in_;
  std::string name_;
  std::size_t line_no_ = 0;
};

}  // namespace

void save_model(const Model& model, const std::filesystem::path& file) {
  model.params.validate();
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open '" + file.string() + "' for writing");
  const auto& p = model.params;
  out << kModelMagic << ' ' << kModelVersion << '\n';
  out << "layers " << p.layer_sizes[0] << ' ' << p.layer_sizes[1] << ' ' << p.layer_sizes[2]
      << ' ' << p.layer_sizes[3] << '\n';
  out << "hidden " << to_string(p.hidden) << '\n';
  out << "output " << to_string(p.output) << '\n';
  out << "norm_mean ";
  write_row(out, model.normalization.mean.data(), 4);
  out << "norm_std ";
  write_row(out, model.normalization.stddev.data(), 4);
  for (int i = 0; i < 3; ++i) {
    for (Eigen::Index r = 0; r < p.weights[i].rows(); ++r) {
      out << "w" << i << ' ';
      const Eigen::VectorXd row = p.weights[i].row(r).transpose();
      write_row(out, row.data(), row.size());
    }
    out << "b" << i << ' ';
    write_row(out, p.biases[i].data(), p.biases[i].size());
  }
  out << "end\n";
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + file.string() + "'");
}

Model load_model(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open model '" + file.string() + "'");
  ModelReader reader(in, file.string());

  const auto version = reader.line(kModelMagic);
  if (version.size() != 1 || version[0] != std::to_string(kModelVersion)) {
    reader.fail("unsupported model version");
  }
  const auto layers = reader.numbers("layers", 4);
  Model model;
  for (int i = 0; i < 4; ++i) model.params.layer_sizes[i] = static_cast<int>(layers[i]);
  if (model.params.layer_sizes[0] != 4 || model.params.layer_sizes[3] != 2 ||
      model.params.layer_sizes[1] <= 0 || model.params.layer_sizes[2] <= 0) {
    reader.fail("layer sizes must be 4 H1 H2 2 with positive hidden widths");
  }
  const auto hidden = reader.line("hidden");
  const auto output = reader.line("output");
  if (hidden.size() != 1 || output.size() != 1) reader.fail("malformed activation tags");
  try {
    model.params.hidden = parse_activation(hidden[0]);
  } catch (const std::runtime_error& e) {
    reader.fail(e.what());
  }
  if (output[0] != to_string(OutputSquash::kTanhSigmoid)) reader.fail("unknown output squashing");

  const auto mean = reader.numbers("norm_mean", 4);
  const auto stddev = reader.numbers("norm_std", 4);
  for (int i = 0; i < 4; ++i) {
    model.normalization.mean[i] = mean[i];
    model.normalization.stddev[i] = stddev[i];
    if (!(stddev[i] > 0.0)) reader.fail("normalization std must be positive");
  }

  auto& p = model.params;
  for (int i = 0; i < 3; ++i) {
    const int rows = p.layer_sizes[i + 1];
    const int cols = p.layer_sizes[i];
    p.weights[i].resize(rows, cols);
    for (int r = 0; r < rows; ++r) {
      const auto values = reader.numbers("w" + std::to_string(i), static_cast<std::size_t>(cols));
      for (int c = 0; c < cols; ++c) p.weights[i](r, c) = values[static_cast<std::size_t>(c)];
    }
    const auto bias = reader.numbers("b" + std::to_string(i), static_cast<std::size_t>(rows));
    p.biases[i] = Eigen::Map<const Eigen::VectorXd>(bias.data(), rows);
  }
  reader.line("end");
  p.validate();
  return model;
}

}  // namespace zst
