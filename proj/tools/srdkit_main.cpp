#include "srdkit/cli/commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace srdkit::cli;

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CommandError(kParseError, path + ": cannot open file");
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void emit(const CommandOutput& out, const std::string& path) {
  if (path.empty()) {
    std::cout << out.text;
  } else {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CommandError(kParseError, path + ": cannot write file");
    f << out.text;
  }
  for (const auto& w : out.warnings) std::cerr << "warning: " << w << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian sequential rate-distortion toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonOptions common;
  std::string out_path, units = "bits";
  app.add_option("--eps", common.solver.eps, "relative duality gap tolerance")->capture_default_str();
  app.add_option("--gamma", common.solver.gamma, "central path neighborhood size")->capture_default_str();
  app.add_option("--sigma", common.solver.sigma, "barrier reduction rate")->capture_default_str();
  app.add_option("--max-iters", common.solver.max_iters, "iteration limit")->capture_default_str();
  app.add_option("--rank-tol", common.solver.rank_tol, "relative eigenvalue threshold for sensor rank")
      ->capture_default_str();
  app.add_option("--jobs", common.jobs, "worker threads")->capture_default_str();
  app.add_option("--seed", common.seed, "random seed")->capture_default_str();
  app.add_option("--units", units, "rate units in JSON output (bits or nats)")->capture_default_str();
  app.add_option("--out", out_path, "write output to this file instead of stdout");

  std::string model_path, second_path;

  CurveOptions curve;
  auto* srd_curve = app.add_subcommand("srd-curve", "stationary SRD function over a grid of distortions (CSV)");
  srd_curve->add_option("model", model_path, "stationary model file")->required();
  srd_curve->add_option("--d-min", curve.d_min, "smallest distortion")->capture_default_str();
  srd_curve->add_option("--d-max", curve.d_max, "largest distortion")->capture_default_str();
  srd_curve->add_option("--points", curve.points, "number of grid points")->capture_default_str();
  srd_curve->add_flag("--log", curve.log_spacing, "logarithmic grid spacing");

  auto* schedule = app.add_subcommand("schedule", "optimal covariance schedule and sensor design (JSON)");
  schedule->add_option("model", model_path, "model file")->required();

  auto* synth = app.add_subcommand("synth", "sensor design from a saved schedule (JSON)");
  synth->add_option("model", model_path, "model file")->required();
  synth->add_option("schedule", second_path, "schedule JSON produced by `schedule`")->required();

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo check of a sensor design (JSON)");
  simulate->add_option("model", model_path, "model file")->required();
  simulate->add_option("design", second_path, "design or schedule JSON")->required();
  simulate->add_option("--paths", sim.paths, "number of sample paths")->capture_default_str();
  simulate->add_option("--steps", sim.steps, "simulated steps for stationary designs")->capture_default_str();

  std::string preset_name;
  double dt = 0.01;
  auto* preset = app.add_subcommand("preset", "emit an example model file (pendulum or satellite)");
  preset->add_option("name", preset_name, "pendulum or satellite")->required();
  preset->add_option("--dt", dt, "sampling period for the Tustin discretization")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kParseError;
  }

  try {
    common.units = parse_units(units);
    common.solver.validate();
    CommandOutput out;
    if (*srd_curve) {
      out = cmd_srd_curve(read_file(model_path), curve, common);
    } else if (*schedule) {
      out = cmd_schedule(read_file(model_path), common);
    } else if (*synth) {
      out = cmd_synth(read_file(model_path), read_file(second_path), common);
    } else if (*simulate) {
      out = cmd_simulate(read_file(model_path), read_file(second_path), sim, common);
    } else {
      out = cmd_preset(preset_name, dt);
    }
    emit(out, out_path);
    return out.exit_code;
  } catch (const CommandError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code();
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kParseError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kParseError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSolverFailure;
  }
}
