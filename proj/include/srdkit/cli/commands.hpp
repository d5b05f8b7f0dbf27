#pragma once

// The five commands of the `srdkit` tool as plain functions from input
// documents to output text, so tests can drive them without a process.

#include "srdkit/cli/io.hpp"
#include "srdkit/maxdet.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace srdkit::cli {

enum ExitCode : int { kOk = 0, kParseError = 2, kInfeasible = 3, kSolverFailure = 4 };

/// Failure carrying the process exit code the tool should return.
class CommandError : public std::runtime_error {
 public:
  CommandError(int code, const std::string& what) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

struct CommonOptions {
  maxdet::SolverConfig solver;
  unsigned jobs = 1;
  Units units = Units::Bits;
  std::uint64_t seed = 1;
};

struct CommandOutput {
  std::string text;
  std::vector<std::string> warnings;
  int exit_code = kOk;
};

struct CurveOptions {
  double d_min = 0.1;
  double d_max = 10.0;
  int points = 20;
  bool log_spacing = false;
};

struct CurveRow {
  double D = 0.0;
  double rate_nats = 0.0;
  Index rank = -1;
  maxdet::SolverStatus status = maxdet::SolverStatus::NumericalFailure;
  int iterations = 0;
  double mu_final = 0.0;
};

struct SimulateOptions {
  std::int64_t paths = 100000;
  int steps = 50;  // simulated steps for a stationary design
};

std::vector<double> distortion_grid(const CurveOptions& opt);
std::vector<CurveRow> srd_curve_rows(const ModelInput& in, const CurveOptions& opt, const CommonOptions& common);

/// CSV columns: D, rate_nats, rate_bits, rank, status, iters, mu_final.
CommandOutput cmd_srd_curve(const std::string& model_text, const CurveOptions& opt, const CommonOptions& common);
CommandOutput cmd_schedule(const std::string& model_text, const CommonOptions& common);
CommandOutput cmd_synth(const std::string& model_text, const std::string& schedule_text, const CommonOptions& common);
CommandOutput cmd_simulate(const std::string& model_text, const std::string& design_text, const SimulateOptions& opt,
                           const CommonOptions& common);
CommandOutput cmd_preset(const std::string& name, double dt);

}  // namespace srdkit::cli
