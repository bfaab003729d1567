// zst: data collection, training, closed-loop runs, HIL bridge and plot export.

#include <atomic>
#include <chrono>
#include <csignal>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "zst/config.hpp"
#include "zst/harness.hpp"
#include "zst/hilbridge.hpp"
#include "zst/imitation.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "YAML config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the relevant seed");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

zst::AppConfig load(const Common& c) {
  return c.config.empty() ? zst::AppConfig{} : zst::load_config(c.config);
}

fs::path prepare_out(const Common& c, const zst::AppConfig& cfg) {
  fs::create_directories(c.out);
  std::ofstream(fs::path(c.out) / "config.yaml") << zst::dump_config(cfg);
  return c.out;
}

void apply_controller(zst::ScenarioConfig& sc, const std::string& controller,
                      const std::string& model, const std::string& playback) {
  if (!controller.empty()) sc.controller = zst::parse_controller_kind(controller);
  if (!model.empty()) sc.model_file = model;
  if (!playback.empty()) sc.playback_file = playback;
}

void print_summary(std::ostream& os, const zst::ErrorSummary& s) {
  os << "records " << s.records << "\n"
     << "mean_cross_track_m " << s.aggregate_mean << "\n"
     << "max_cross_track_m " << s.aggregate_max << "\n";
  for (const auto& seg : s.segments) {
    if (seg.last_index == seg.first_index || seg.count == 0) continue;
    os << "segment " << seg.first_index << "-" << seg.last_index << " v_ref " << seg.reference_speed
       << " v_mean " << seg.mean_speed << " v_min " << seg.min_speed << " v_max " << seg.max_speed
       << "\n";
  }
}

void report_trace(const zst::RunTrace& trace, const std::string& label) {
  std::cout << label << ": " << trace.records.size() << " steps, progress " << trace.progress
            << " m" << (trace.completed_lap ? ", lap completed" : "")
            << (trace.reached_end ? ", end reached" : "") << "\n";
  if (trace.flagged()) std::cerr << label << ": " << trace.abort_reason << "\n";
}

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

std::string session_stamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zst: trajectory tracking with MPC and imitation-learned controllers"};
  app.require_subcommand(1);

  // collect
  Common collect_opts;
  bool multi_speed = false;
  std::optional<double> run_seconds;
  auto* collect = app.add_subcommand("collect", "Record an MPC dataset on the training trajectories");
  add_common(collect, collect_opts);
  collect->add_flag("--multi-speed", multi_speed, "use the two-speed training profile");
  collect->add_option("--run-seconds", run_seconds, "closed-loop seconds per trajectory");

  // train
  Common train_opts;
  std::vector<std::string> data_files;
  auto* train = app.add_subcommand("train", "Train the network on one or more datasets");
  add_common(train, train_opts);
  train->add_option("--data", data_files, "dataset CSV (repeatable)")->required()->check(CLI::ExistingFile);

  // run / eval share controller flags
  Common run_opts, eval_opts;
  std::string controller, model, playback;
  auto add_controller = [&](CLI::App* cmd) {
    cmd->add_option("--controller", controller, "mpc|nn|playback")
        ->check(CLI::IsMember({"mpc", "nn", "playback"}));
    cmd->add_option("--model", model, "NN model file")->check(CLI::ExistingFile);
    cmd->add_option("--playback", playback, "dataset CSV replayed by the playback controller")
        ->check(CLI::ExistingFile);
  };
  auto* run = app.add_subcommand("run", "Run one closed-loop scenario and write its trace");
  add_common(run, run_opts);
  add_controller(run);
  auto* eval = app.add_subcommand("eval", "Run all repetitions and summarize the tracking error");
  add_common(eval, eval_opts);
  add_controller(eval);

  // hil
  Common hil_opts;
  std::optional<double> hil_seconds;
  std::optional<unsigned short> hil_port;
  auto* hil = app.add_subcommand("hil", "Serve the human-in-the-loop driving bridge");
  add_common(hil, hil_opts);
  hil->add_option("--port", hil_port, "listen port (overrides hil.port)");
  hil->add_option("--seconds", hil_seconds, "stop after this many wall-clock seconds");

  // export
  Common export_opts;
  std::vector<std::string> trace_files;
  std::string kind = "overlay";
  bool svg = false;
  auto* exp = app.add_subcommand("export", "Write plot-ready CSV (and SVG) from trace files");
  add_common(exp, export_opts);
  exp->add_option("--trace", trace_files, "trace CSV (repeatable)")->required()->check(CLI::ExistingFile);
  exp->add_option("--kind", kind, "overlay|control_profile|error_curve|speed_heatmap")
      ->check(CLI::IsMember({"overlay", "control_profile", "error_curve", "speed_heatmap"}));
  exp->add_flag("--svg", svg, "also render an SVG");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*collect) {
      zst::AppConfig cfg = load(collect_opts);
      if (collect_opts.seed) cfg.collect.seed = *collect_opts.seed;
      if (multi_speed) cfg.collect.multi_speed = true;
      if (run_seconds) cfg.collect.run_seconds = *run_seconds;
      const fs::path out = prepare_out(collect_opts, cfg);
      zst::CollectOptions options;
      options.control_hz = cfg.scenario.control_hz;
      options.plant_hz = cfg.scenario.plant_hz;
      options.lookahead = cfg.scenario.lookahead;
      const auto data = zst::collect_mpc_dataset(
          zst::make_training_set(cfg.collect.multi_speed, cfg.collect.speed, cfg.scenario.path.spacing),
          cfg.scenario.vehicle, cfg.scenario.mpc, cfg.collect.run_seconds, cfg.collect.perturbation,
          cfg.collect.seed, options);
      zst::write_dataset_csv(data, out / "dataset.csv");
      std::cout << "wrote " << data.size() << " samples to " << (out / "dataset.csv").string() << "\n";
      return 0;
    }

    if (*train) {
      zst::AppConfig cfg = load(train_opts);
      if (train_opts.seed) cfg.train.seed = *train_opts.seed;
      const fs::path out = prepare_out(train_opts, cfg);
      zst::Dataset data;
      for (const auto& f : data_files) data.append(zst::read_dataset_csv(f));
      const auto result = zst::train(data, cfg.train);
      zst::save_model(result.model, out / "model.txt");
      std::ofstream loss(out / "loss.csv");
      loss << "epoch,train_mse,validation_mse\n";
      for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
        loss << e + 1 << ',' << result.train_loss[e] << ','
             << (e < result.validation_loss.size() ? result.validation_loss[e] : 0.0) << '\n';
      }
      std::cout << "trained on " << data.size() << " samples; final train MSE "
                << result.train_loss.back();
      if (!result.validation_loss.empty()) std::cout << ", validation MSE " << result.validation_loss.back();
      std::cout << "\nwrote " << (out / "model.txt").string() << "\n";
      return 0;
    }

    if (*run || *eval) {
      const Common& opts = *run ? run_opts : eval_opts;
      zst::AppConfig cfg = load(opts);
      if (opts.seed) cfg.scenario.seed = *opts.seed;
      apply_controller(cfg.scenario, controller, model, playback);
      const fs::path out = prepare_out(opts, cfg);
      const zst::ReferencePath path = cfg.scenario.path.build();
      zst::write_path_csv(path, out / "path.csv");
      std::vector<zst::RunTrace> traces;
      if (*run) {
        traces.push_back(zst::run_scenario(cfg.scenario));
        zst::write_trace_csv(traces[0], out / "trace.csv", cfg.scenario.diagnostics);
        report_trace(traces[0], "run");
      } else {
        traces = zst::run_repetitions(cfg.scenario);
        for (std::size_t r = 0; r < traces.size(); ++r) {
          const fs::path file = out / ("trace_" + std::to_string(r) + ".csv");
          zst::write_trace_csv(traces[r], file, cfg.scenario.diagnostics);
          report_trace(traces[r], "repetition " + std::to_string(r));
        }
      }
      const zst::ErrorSummary summary = zst::evaluate(traces, path);
      zst::export_plot(zst::PlotKind::kErrorCurve, nullptr, &summary, path, out / "error_curve.csv");
      std::ofstream(out / "summary.txt") << [&] {
        std::ostringstream os;
        print_summary(os, summary);
        return os.str();
      }();
      print_summary(std::cout, summary);
      bool flagged = false;
      for (const auto& t : traces) flagged = flagged || t.flagged();
      return flagged ? 2 : 0;
    }

    if (*hil) {
      zst::AppConfig cfg = load(hil_opts);
      if (hil_port) cfg.hil.port = *hil_port;
      const fs::path out = prepare_out(hil_opts, cfg);
      auto session = std::make_unique<zst::hil::Session>(
          zst::hil::training_trajectories(cfg.hil.multi_speed), cfg.hil, cfg.scenario.vehicle,
          cfg.scenario.lookahead, session_stamp());
      zst::hil::Server server(std::move(session));
      server.start();
      std::cout << "HIL bridge on ws://" << cfg.hil.bind << ":" << server.port()
                << "/drive (trajectories at http://" << cfg.hil.bind << ":" << server.port()
                << "/trajectories); Ctrl-C to finish" << std::endl;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const auto started = std::chrono::steady_clock::now();
      while (!g_stop.load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        if (hil_seconds && std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                                   .count() >= *hil_seconds) {
          break;
        }
      }
      server.stop();
      if (server.session().samples().empty()) {
        std::cout << "no samples recorded; nothing written\n";
        return 0;
      }
      const auto files = zst::hil::finalize_session(server.session(), out);
      std::cout << "wrote " << server.session().samples().size() << " samples to "
                << files.dataset.string() << "\n";
      return 0;
    }

    if (*exp) {
      zst::AppConfig cfg = load(export_opts);
      const fs::path out = prepare_out(export_opts, cfg);
      const zst::ReferencePath path = cfg.scenario.path.build();
      std::vector<zst::RunTrace> traces;
      for (const auto& f : trace_files) traces.push_back(zst::read_trace_csv(f));
      const zst::PlotKind plot = zst::parse_plot_kind(kind);
      const fs::path file = out / (kind + ".csv");
      if (plot == zst::PlotKind::kErrorCurve) {
        const zst::ErrorSummary summary = zst::evaluate(traces, path);
        zst::export_plot(plot, nullptr, &summary, path, file, svg);
      } else {
        zst::export_plot(plot, &traces.front(), nullptr, path, file, svg);
      }
      std::cout << "wrote " << file.string() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
