// Regenerates the scripted-driver HIL datasets shipped under tests/fixtures.

#include <iostream>

#include <CLI11.hpp>

#include "synthetic_driver.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write scripted-driver HIL sessions (constant and multi-speed)"};
  std::string out = "tests/fixtures";
  double seconds = 60.0;
  std::uint64_t seed = 11;
  app.add_option("--out", out, "output directory")->capture_default_str();
  app.add_option("--seconds", seconds, "recorded seconds per trajectory")->capture_default_str();
  app.add_option("--seed", seed, "driver jitter seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    const zst::VehicleParams params;
    for (const bool multi : {false, true}) {
      zst::hil::Session session(zst::hil::training_trajectories(multi), zst::HilConfig{}, params, 2.0,
                                multi ? "multispeed" : "constant");
      zst::tools::drive_all(session, params, seconds, seed);
      const auto files = zst::hil::finalize_session(session, out);
      std::cout << files.dataset.string() << ": " << session.samples().size() << " samples\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
