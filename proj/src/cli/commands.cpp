#include "srdkit/cli/commands.hpp"

#include "srdkit/presets.hpp"
#include "srdkit/problems.hpp"
#include "srdkit/sim.hpp"
#include "srdkit/synthesis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

namespace srdkit::cli {

namespace {

using ojson = nlohmann::ordered_json;

ModelInput load_model(const std::string& text) {
  try {
    return parse_model(text);
  } catch (const ParseError& e) {
    throw CommandError(kParseError, e.what());
  }
}

int exit_code_for(maxdet::SolverStatus s) {
  switch (s) {
    case maxdet::SolverStatus::Optimal:
      return kOk;
    case maxdet::SolverStatus::Infeasible:
      return kInfeasible;
    default:
      return kSolverFailure;
  }
}

ojson solver_json(const maxdet::SolverSolution<double>& sol) {
  ojson j;
  j["status"] = maxdet::to_string(sol.status);
  j["iterations"] = sol.iterations;
  j["mu_final"] = sol.mu;
  j["objective"] = sol.objective;
  if (!sol.message.empty()) j["message"] = sol.message;
  return j;
}

template <typename F>
void parallel_for(std::size_t count, unsigned jobs, F&& body) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
  for (auto& t : pool) t.join();
}

ScheduleResult<double> solve_model(const ModelInput& in, const CommonOptions& common) {
  if (!in.spec) throw CommandError(kParseError, "model: field 'constraint': missing required field");
  try {
    if (in.model.stationary)
      return solve_stationary<double>(in.model.A.front(), in.model.W.front(), in.theta.front(), in.spec->values.front(),
                                      common.solver);
    return solve_schedule(in.model, *in.spec, common.solver);
  } catch (const InvalidModel& e) {
    throw CommandError(kParseError, std::string("model: ") + e.what());
  }
}

SensorDesign<double> design_from(const ModelInput& in, const CovarianceSchedule<double>& s, const CommonOptions& common) {
  try {
    return synthesize(in.model, s, common.solver.rank_tol);
  } catch (const InconsistentSchedule& e) {
    throw CommandError(kInfeasible, std::string("schedule: ") + e.what());
  }
}

}  // namespace

std::vector<double> distortion_grid(const CurveOptions& opt) {
  if (!(opt.d_min > 0) || !(opt.d_max >= opt.d_min))
    throw CommandError(kParseError, "distortion range must satisfy 0 < d-min <= d-max");
  if (opt.points < 1) throw CommandError(kParseError, "number of points must be at least 1");
  std::vector<double> d;
  for (int k = 0; k < opt.points; ++k) {
    const double f = opt.points == 1 ? 0.0 : static_cast<double>(k) / (opt.points - 1);
    d.push_back(opt.log_spacing ? opt.d_min * std::pow(opt.d_max / opt.d_min, f)
                                : opt.d_min + (opt.d_max - opt.d_min) * f);
  }
  return d;
}

std::vector<CurveRow> srd_curve_rows(const ModelInput& in, const CurveOptions& opt, const CommonOptions& common) {
  if (!in.model.stationary) throw CommandError(kParseError, "model: field 'horizon': srd-curve needs \"stationary\"");
  const auto grid = distortion_grid(opt);
  const MatrixXd& A = in.model.A.front();
  const MatrixXd& W = in.model.W.front();
  const MatrixXd& theta = in.theta.front();
  if (!is_detectable<double>(A, theta))
    throw CommandError(kParseError, "model: (A, Theta) is not detectable: an unstable mode is invisible to the distortion weight");

  std::vector<CurveRow> rows(grid.size());
  parallel_for(grid.size(), common.jobs, [&](std::size_t i) {
    CurveRow& row = rows[i];
    row.D = grid[i];
    const auto r = solve_stationary<double>(A, W, theta, grid[i], common.solver);
    row.status = r.solution.status;
    row.iterations = r.solution.iterations;
    row.mu_final = r.solution.mu;
    if (r.solution.status != maxdet::SolverStatus::Optimal) {
      row.rate_nats = std::nan("");
      return;
    }
    row.rate_nats = r.schedule.rate_nats;
    try {
      row.rank = synthesize(in.model, r.schedule, common.solver.rank_tol).ranks.front();
    } catch (const InconsistentSchedule&) {
      row.status = maxdet::SolverStatus::NumericalFailure;
    }
  });
  return rows;
}

CommandOutput cmd_srd_curve(const std::string& model_text, const CurveOptions& opt, const CommonOptions& common) {
  const auto in = load_model(model_text);
  auto rows = srd_curve_rows(in, opt, common);
  std::stable_sort(rows.begin(), rows.end(), [](const CurveRow& a, const CurveRow& b) { return a.D < b.D; });

  CommandOutput out;
  std::ostringstream csv;
  csv << "D,rate_nats,rate_bits,rank,status,iters,mu_final\n";
  const CurveRow* prev = nullptr;
  for (const auto& r : rows) {
    csv << format_number(r.D) << ',' << format_number(r.rate_nats) << ','
        << format_number(to_units(r.rate_nats, Units::Bits)) << ',' << (r.rank >= 0 ? std::to_string(r.rank) : "")
        << ',' << maxdet::to_string(r.status) << ',' << r.iterations << ',' << format_number(r.mu_final) << '\n';
    if (r.status != maxdet::SolverStatus::Optimal) {
      out.warnings.push_back("solve at D=" + format_number(r.D) + " ended with status " + maxdet::to_string(r.status));
      out.exit_code = std::max(out.exit_code, exit_code_for(r.status));
      continue;
    }
    if (prev && r.rate_nats > prev->rate_nats + 1e-6 * std::max(1.0, prev->rate_nats))
      out.warnings.push_back("rate increases from D=" + format_number(prev->D) + " to D=" + format_number(r.D) +
                             "; solver accuracy is suspect");
    prev = &r;
  }
  out.text = csv.str();
  return out;
}

CommandOutput cmd_schedule(const std::string& model_text, const CommonOptions& common) {
  const auto in = load_model(model_text);
  const auto r = solve_model(in, common);
  ojson j;
  j["schema"] = schema_version;
  j["kind"] = "schedule";
  j["units"] = units_name(common.units);
  j["mode"] = in.spec->mode == ConstraintMode::Hard ? "hard" : "soft";
  j["horizon"] = in.model.stationary ? ojson("stationary") : ojson(in.model.horizon);
  j["solver"] = solver_json(r.solution);
  CommandOutput out;
  if (r.solution.status != maxdet::SolverStatus::Optimal) {
    out.exit_code = exit_code_for(r.solution.status);
    out.warnings.push_back("solver ended with status " + std::string(maxdet::to_string(r.solution.status)) +
                           (r.solution.message.empty() ? "" : ": " + r.solution.message));
    out.text = dump(j);
    return out;
  }
  const auto design = design_from(in, r.schedule, common);
  j["schedule"] = schedule_to_json(r.schedule);
  if (in.spec->mode == ConstraintMode::Soft && !in.model.stationary) {
    ojson mult = ojson::array();
    for (std::size_t k = 0; k < r.schedule.P_filt.size(); ++k) mult.push_back(in.spec->value_at(static_cast<int>(k)));
    j["alpha"] = mult;
  } else if (in.spec->mode == ConstraintMode::Hard) {
    j["alpha"] = distortion_multipliers(r.srd, r.solution);
  }
  j["design"] = design_to_json(design, common.units);
  ojson rates;
  ojson per_nats = ojson::array(), per_units = ojson::array();
  for (double v : design.rate_per_step_nats) {
    per_nats.push_back(v);
    per_units.push_back(to_units(v, common.units));
  }
  rates["per_step_nats"] = per_nats;
  rates["per_step"] = per_units;
  rates["total_nats"] = design.total_rate_nats();
  rates["total"] = to_units(design.total_rate_nats(), common.units);
  j["rates"] = rates;
  out.text = dump(j);
  return out;
}

CommandOutput cmd_synth(const std::string& model_text, const std::string& schedule_text, const CommonOptions& common) {
  const auto in = load_model(model_text);
  CovarianceSchedule<double> s;
  try {
    s = parse_schedule(schedule_text, in.model);
  } catch (const ParseError& e) {
    throw CommandError(kParseError, e.what());
  }
  const auto design = design_from(in, s, common);
  ojson j;
  j["schema"] = schema_version;
  j["kind"] = "design";
  j["design"] = design_to_json(design, common.units);
  return {dump(j), {}, kOk};
}

CommandOutput cmd_simulate(const std::string& model_text, const std::string& design_text, const SimulateOptions& opt,
                           const CommonOptions& common) {
  const auto in = load_model(model_text);
  SensorDesign<double> design;
  try {
    design = parse_design(design_text, in.model);
  } catch (const ParseError& e) {
    throw CommandError(kParseError, e.what());
  }
  if (opt.paths < 1) throw CommandError(kParseError, "--paths must be at least 1");
  GaussMarkovModel<double> model = in.model;
  std::vector<MatrixXd> theta = in.theta;
  if (model.stationary) {
    if (opt.steps < 1) throw CommandError(kParseError, "--steps must be at least 1");
    std::tie(model, design) = expand_stationary(model, design, opt.steps);
  }
  SimulationReport<double> rep;
  try {
    rep = simulate(model, design, SimulationOptions{opt.paths, common.seed, common.jobs}, theta);
  } catch (const InvalidModel& e) {
    throw CommandError(kParseError, std::string("design: ") + e.what());
  }
  ojson j;
  j["schema"] = schema_version;
  j["kind"] = "simulation";
  j["report"] = report_to_json(rep, in.spec);
  return {dump(j), {}, kOk};
}

CommandOutput cmd_preset(const std::string& name, double dt) {
  try {
    return {dump(preset_to_json(make_preset(name, dt))), {}, kOk};
  } catch (const std::invalid_argument& e) {
    throw CommandError(kParseError, e.what());
  } catch (const std::domain_error& e) {
    throw CommandError(kParseError, e.what());
  }
}

}  // namespace srdkit::cli
