#pragma once

// Text formats of the command-line tool: model files, schedule/design
// documents and simulation reports (JSON, schema "srdkit/1").

#include "srdkit/model.hpp"
#include "srdkit/presets.hpp"
#include "srdkit/sim.hpp"
#include "srdkit/synthesis.hpp"

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace srdkit::cli {

inline constexpr const char* schema_version = "srdkit/1";

/// Malformed input document; the message names the line and/or field.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

enum class Units { Bits, Nats };

Units parse_units(const std::string& s);
double to_units(double nats, Units u);
const char* units_name(Units u);

struct ModelInput {
  GaussMarkovModel<double> model;
  std::vector<MatrixXd> theta;
  std::optional<DistortionSpec<double>> spec;  // absent when the file has no constraint
  std::vector<std::string> labels;
};

/// Parses a model file. `source` names the document in diagnostics.
ModelInput parse_model(const std::string& text, const std::string& source = "model");

nlohmann::ordered_json matrix_to_json(const MatrixXd& m);
nlohmann::ordered_json model_to_json(const ModelInput& in);
nlohmann::ordered_json preset_to_json(const Preset& p);

/// Reads P_{t|t} of every step from a schedule document.
CovarianceSchedule<double> parse_schedule(const std::string& text, const GaussMarkovModel<double>& model,
                                          const std::string& source = "schedule");
/// Reads a sensor design, either a design document or a schedule document carrying one.
SensorDesign<double> parse_design(const std::string& text, const GaussMarkovModel<double>& model,
                                  const std::string& source = "design");

nlohmann::ordered_json schedule_to_json(const CovarianceSchedule<double>& s);
nlohmann::ordered_json design_to_json(const SensorDesign<double>& d, Units u);
nlohmann::ordered_json report_to_json(const SimulationReport<double>& r, const std::optional<DistortionSpec<double>>& spec);

std::string dump(const nlohmann::ordered_json& j);
std::string format_number(double v);

}  // namespace srdkit::cli
