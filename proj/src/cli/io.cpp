#include "srdkit/cli/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>
#include <set>
#include <string_view>

namespace srdkit::cli {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

struct Doc {
  const std::string& text;
  std::string source;
};

// Line of the first occurrence of `"key":`; 0 when not found.
int line_of_key(const std::string& text, const std::string& key) {
  if (key.empty()) return 0;
  std::string escaped;
  for (char ch : key) {
    if (std::string_view("\\^$.|?*+()[]{}").find(ch) != std::string_view::npos) escaped += '\\';
    escaped += ch;
  }
  const std::regex re("\"" + escaped + "\"\\s*:");
  std::smatch m;
  if (!std::regex_search(text, m, re)) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + m.position(0), '\n'));
}

[[noreturn]] void fail(const Doc& d, const std::string& key, const std::string& field, const std::string& msg) {
  std::string where = d.source;
  if (const int line = line_of_key(d.text, key); line > 0) where += ":" + std::to_string(line);
  throw ParseError(where + ": field '" + field + "': " + msg);
}

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    if (const auto pos = msg.find("] "); pos != std::string::npos) msg = msg.substr(pos + 2);
    const auto end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(end), '\n');
    throw ParseError(source + ":" + std::to_string(line) + ": invalid JSON: " + msg);
  }
}

int depth(const json& j) {
  if (j.is_number()) return 0;
  if (j.is_array() && !j.empty()) return 1 + depth(j.front());
  return -1;
}

MatrixXd to_matrix(const Doc& d, const std::string& key, const std::string& field, const json& j) {
  if (j.is_number()) return MatrixXd::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) fail(d, key, field, "expected a number or a non-empty array of rows");
  const auto rows = static_cast<Index>(j.size());
  Index cols = -1;
  MatrixXd m;
  for (Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    const std::string rf = field + "[" + std::to_string(r) + "]";
    if (!row.is_array() || row.empty()) fail(d, key, rf, "expected a non-empty array of numbers");
    if (cols < 0) {
      cols = static_cast<Index>(row.size());
      m.resize(rows, cols);
    } else if (static_cast<Index>(row.size()) != cols) {
      fail(d, key, rf, "row has " + std::to_string(row.size()) + " entries, expected " + std::to_string(cols));
    }
    for (Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) fail(d, key, rf + "[" + std::to_string(c) + "]", "expected a number");
      m(r, c) = v.get<double>();
      if (!std::isfinite(m(r, c))) fail(d, key, rf + "[" + std::to_string(c) + "]", "value is not finite");
    }
  }
  return m;
}

// Number: one 1x1 matrix. Depth 1: one 1x1 matrix per entry. Depth 2: one matrix. Depth 3: list of matrices.
std::vector<MatrixXd> to_matrix_list(const Doc& d, const std::string& key, const json& j) {
  switch (depth(j)) {
    case 0:
    case 2:
      return {to_matrix(d, key, key, j)};
    case 1: {
      std::vector<MatrixXd> out;
      for (std::size_t k = 0; k < j.size(); ++k) {
        if (!j[k].is_number()) fail(d, key, key + "[" + std::to_string(k) + "]", "expected a number");
        out.push_back(MatrixXd::Constant(1, 1, j[k].get<double>()));
      }
      return out;
    }
    case 3: {
      std::vector<MatrixXd> out;
      for (std::size_t k = 0; k < j.size(); ++k) out.push_back(to_matrix(d, key, key + "[" + std::to_string(k) + "]", j[k]));
      return out;
    }
    default:
      fail(d, key, key, "expected a number, a matrix (array of rows) or a list of matrices");
  }
}

std::vector<double> to_values(const Doc& d, const std::string& key, const std::string& field, const json& j) {
  if (j.is_number()) return {j.get<double>()};
  if (!j.is_array() || j.empty()) fail(d, key, field, "expected a number or a non-empty array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) fail(d, key, field + "[" + std::to_string(k) + "]", "expected a number");
    out.push_back(j[k].get<double>());
  }
  return out;
}

void check_square(const Doc& d, const std::string& key, const std::vector<MatrixXd>& ms, Index n) {
  for (std::size_t k = 0; k < ms.size(); ++k)
    if (ms[k].rows() != n || ms[k].cols() != n)
      fail(d, key, ms.size() == 1 ? key : key + "[" + std::to_string(k) + "]",
           "expected " + std::to_string(n) + "x" + std::to_string(n) + ", got " + std::to_string(ms[k].rows()) + "x" +
               std::to_string(ms[k].cols()));
}

// Field named at the start of a model validation message ("W[0] must be ...").
std::string field_of(const std::string& msg) {
  for (const char* k : {"Theta", "P0", "A", "W"})
    if (msg.rfind(k, 0) == 0) return k;
  return "";
}

const json& member(const Doc& d, const json& obj, const std::string& key) {
  if (!obj.contains(key)) fail(d, "", key, "missing required field");
  return obj.at(key);
}

const json& steps_node(const Doc& d, const json& root, const char* section) {
  if (!root.is_object()) fail(d, "", "(document)", "expected a JSON object");
  const json& node = root.contains(section) ? root.at(section) : root;
  if (!node.is_object()) fail(d, section, section, "expected a JSON object");
  return node;
}

MatrixXd step_matrix(const Doc& d, const json& step, const std::string& field, const std::string& name, Index rows,
                     Index cols) {
  if (!step.contains(name)) fail(d, name, field + "." + name, "missing required field");
  const json& j = step.at(name);
  if (j.is_array() && j.empty()) {
    if (rows == 0 || cols == 0) return MatrixXd(rows, cols);
    fail(d, name, field + "." + name, "expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got an empty array");
  }
  const MatrixXd m = to_matrix(d, name, field + "." + name, j);
  if (m.rows() != rows || m.cols() != cols)
    fail(d, name, field + "." + name,
         "expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
             std::to_string(m.cols()));
  return m;
}

std::size_t step_count(const GaussMarkovModel<double>& model) {
  return model.stationary ? 1 : static_cast<std::size_t>(model.horizon);
}

}  // namespace

Units parse_units(const std::string& s) {
  if (s == "bits") return Units::Bits;
  if (s == "nats") return Units::Nats;
  throw ParseError("--units: expected 'bits' or 'nats', got '" + s + "'");
}

double to_units(double nats, Units u) { return u == Units::Bits ? nats / std::log(2.0) : nats; }

const char* units_name(Units u) { return u == Units::Bits ? "bits" : "nats"; }

ModelInput parse_model(const std::string& text, const std::string& source) {
  const Doc d{text, source};
  const json root = parse_json(text, source);
  if (!root.is_object()) fail(d, "", "(document)", "expected a JSON object");
  static const std::set<std::string> known{"horizon", "A", "W", "P0", "Theta", "constraint", "labels", "preset", "schema"};
  for (const auto& [key, value] : root.items())
    if (!known.count(key))
      fail(d, key, key, "unknown field (expected horizon, A, W, P0, Theta, constraint, labels)");

  ModelInput in;
  auto& m = in.model;
  const json& h = member(d, root, "horizon");
  if (h.is_string() && h.get<std::string>() == "stationary") {
    m.stationary = true;
    m.horizon = 1;
  } else if (h.is_number_integer() && h.get<long long>() > 0 && h.get<long long>() < 1000000) {
    m.horizon = static_cast<int>(h.get<long long>());
  } else {
    fail(d, "horizon", "horizon", "expected a positive integer or \"stationary\"");
  }
  const std::size_t steps = step_count(m);

  m.A = to_matrix_list(d, "A", member(d, root, "A"));
  m.W = to_matrix_list(d, "W", member(d, root, "W"));
  const Index n = m.A.front().rows();
  for (const char* key : {"A", "W"}) {
    const auto& list = std::string(key) == "A" ? m.A : m.W;
    if (list.size() != 1 && list.size() != steps)
      fail(d, key, key, "expected 1 or " + std::to_string(steps) + " matrices, got " + std::to_string(list.size()));
    check_square(d, key, list, n);
  }
  if (root.contains("P0")) {
    m.P0 = to_matrix(d, "P0", "P0", root.at("P0"));
    check_square(d, "P0", {m.P0}, n);
  } else if (m.stationary) {
    m.P0 = MatrixXd::Identity(n, n);
  } else {
    fail(d, "", "P0", "missing required field (finite-horizon models need an initial covariance)");
  }
  in.theta = to_matrix_list(d, "Theta", member(d, root, "Theta"));
  if (in.theta.size() != 1 && in.theta.size() != steps)
    fail(d, "Theta", "Theta", "expected 1 or " + std::to_string(steps) + " matrices, got " + std::to_string(in.theta.size()));
  check_square(d, "Theta", in.theta, n);

  try {
    m.validate();
  } catch (const InvalidModel& e) {
    const std::string f = field_of(e.what());
    fail(d, f, f.empty() ? "model" : f, e.what());
  }

  if (root.contains("constraint")) {
    const json& c = root.at("constraint");
    if (!c.is_object() || c.size() != 1 || !(c.contains("hard") || c.contains("soft")))
      fail(d, "constraint", "constraint", "expected {\"hard\": [D_t]} or {\"soft\": [alpha_t]}");
    const bool hard = c.contains("hard");
    const std::string field = hard ? "constraint.hard" : "constraint.soft";
    auto values = to_values(d, "constraint", field, c.begin().value());
    if (m.stationary && (!hard || values.size() != 1))
      fail(d, "constraint", field, "a stationary model takes a single hard bound D");
    in.spec = hard ? DistortionSpec<double>::hard(in.theta, std::move(values))
                   : DistortionSpec<double>::soft(in.theta, std::move(values));
    try {
      in.spec->validate(n, static_cast<int>(steps));
    } catch (const InvalidModel& e) {
      const std::string f = field_of(e.what());
      fail(d, f.empty() ? "constraint" : f, f.empty() ? field : f, e.what());
    }
  } else {
    try {
      DistortionSpec<double>::hard(in.theta, {1.0}).validate(n, static_cast<int>(steps));
    } catch (const InvalidModel& e) {
      fail(d, "Theta", "Theta", e.what());
    }
  }

  if (root.contains("labels")) {
    const json& l = root.at("labels");
    if (!l.is_array() || l.size() != static_cast<std::size_t>(n))
      fail(d, "labels", "labels", "expected an array of " + std::to_string(n) + " strings");
    for (std::size_t k = 0; k < l.size(); ++k) {
      if (!l[k].is_string()) fail(d, "labels", "labels[" + std::to_string(k) + "]", "expected a string");
      in.labels.push_back(l[k].get<std::string>());
    }
  }
  return in;
}

ojson matrix_to_json(const MatrixXd& m) {
  ojson rows = ojson::array();
  for (Index r = 0; r < m.rows(); ++r) {
    ojson row = ojson::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

ojson list_to_json(const std::vector<MatrixXd>& ms) {
  if (ms.size() == 1) return matrix_to_json(ms.front());
  ojson out = ojson::array();
  for (const auto& m : ms) out.push_back(matrix_to_json(m));
  return out;
}

}  // namespace

ojson model_to_json(const ModelInput& in) {
  ojson j;
  j["horizon"] = in.model.stationary ? ojson("stationary") : ojson(in.model.horizon);
  j["A"] = list_to_json(in.model.A);
  j["W"] = list_to_json(in.model.W);
  if (!in.model.stationary) j["P0"] = matrix_to_json(in.model.P0);
  j["Theta"] = list_to_json(in.theta);
  if (in.spec) {
    ojson values = ojson::array();
    for (double v : in.spec->values) values.push_back(v);
    j["constraint"] = {{in.spec->mode == ConstraintMode::Hard ? "hard" : "soft", values}};
  }
  if (!in.labels.empty()) j["labels"] = in.labels;
  return j;
}

ojson preset_to_json(const Preset& p) {
  ModelInput in{p.model, p.spec.Theta, p.spec, p.labels};
  ojson j;
  j["schema"] = schema_version;
  ojson meta;
  meta["name"] = p.name;
  meta["dt"] = p.dt;
  ojson params = ojson::object();
  for (const auto& [k, v] : p.parameters) params[k] = v;
  meta["parameters"] = params;
  meta["A_continuous"] = matrix_to_json(p.A_cont);
  meta["noise_discretization"] = "W = W_c * dt";
  j["preset"] = meta;
  const ojson model = model_to_json(in);
  for (const auto& [k, v] : model.items()) j[k] = v;
  return j;
}

CovarianceSchedule<double> parse_schedule(const std::string& text, const GaussMarkovModel<double>& model,
                                          const std::string& source) {
  const Doc d{text, source};
  const json root = parse_json(text, source);
  const json& node = steps_node(d, root, "schedule");
  const json& pf = member(d, node, "P_filt");
  const std::size_t steps = step_count(model);
  const Index n = model.dim();
  CovarianceSchedule<double> s;
  s.P_filt = to_matrix_list(d, "P_filt", pf);
  if (s.P_filt.size() != steps)
    fail(d, "P_filt", "P_filt", "expected a list of " + std::to_string(steps) + " matrices, got " +
                                    std::to_string(s.P_filt.size()));
  check_square(d, "P_filt", s.P_filt, n);
  return s;
}

SensorDesign<double> parse_design(const std::string& text, const GaussMarkovModel<double>& model,
                                  const std::string& source) {
  const Doc d{text, source};
  const json root = parse_json(text, source);
  const json& node = steps_node(d, root, "design");
  const json& st = member(d, node, "steps");
  const std::size_t steps = step_count(model);
  const Index n = model.dim();
  if (!st.is_array() || st.size() != steps)
    fail(d, "steps", "steps", "expected an array of " + std::to_string(steps) + " step objects");
  SensorDesign<double> out;
  for (std::size_t k = 0; k < steps; ++k) {
    const json& s = st[k];
    const std::string field = "steps[" + std::to_string(k) + "]";
    if (!s.is_object()) fail(d, "steps", field, "expected an object");
    const json& rank = member(d, s, "rank");
    if (!rank.is_number_integer() || rank.get<long long>() < 0 || rank.get<long long>() > n)
      fail(d, "rank", field + ".rank", "expected an integer between 0 and " + std::to_string(n));
    const auto r = static_cast<Index>(rank.get<long long>());
    out.ranks.push_back(r);
    out.C.push_back(step_matrix(d, s, field, "C", r, n));
    out.V.push_back(step_matrix(d, s, field, "V", r, r));
    out.SNR.push_back(step_matrix(d, s, field, "SNR", n, n));
    out.P_pred.push_back(step_matrix(d, s, field, "P_pred", n, n));
    out.P_filt.push_back(step_matrix(d, s, field, "P_filt", n, n));
    const json& rate = member(d, s, "rate_nats");
    if (!rate.is_number()) fail(d, "rate_nats", field + ".rate_nats", "expected a number");
    out.rate_per_step_nats.push_back(rate.get<double>());
  }
  return out;
}

ojson schedule_to_json(const CovarianceSchedule<double>& s) {
  ojson j;
  j["objective_nats"] = s.objective_nats;
  j["constant_c_nats"] = s.constant_c;
  j["rate_nats"] = s.rate_nats;
  ojson pf = ojson::array(), pi = ojson::array();
  for (const auto& m : s.P_filt) pf.push_back(matrix_to_json(m));
  for (const auto& m : s.Pi) pi.push_back(matrix_to_json(m));
  j["P_filt"] = pf;
  j["Pi"] = pi;
  return j;
}

ojson design_to_json(const SensorDesign<double>& d, Units u) {
  ojson j;
  j["units"] = units_name(u);
  j["total_rate_nats"] = d.total_rate_nats();
  j["total_rate"] = to_units(d.total_rate_nats(), u);
  j["ranks"] = d.ranks;
  ojson steps = ojson::array();
  for (std::size_t k = 0; k < d.SNR.size(); ++k) {
    ojson s;
    s["t"] = k + 1;
    s["rank"] = d.ranks[k];
    s["rate_nats"] = d.rate_per_step_nats[k];
    s["rate"] = to_units(d.rate_per_step_nats[k], u);
    s["SNR"] = matrix_to_json(d.SNR[k]);
    s["C"] = matrix_to_json(d.C[k]);
    s["V"] = matrix_to_json(d.V[k]);
    s["P_pred"] = matrix_to_json(d.P_pred[k]);
    s["P_filt"] = matrix_to_json(d.P_filt[k]);
    steps.push_back(std::move(s));
  }
  j["steps"] = steps;
  return j;
}

ojson report_to_json(const SimulationReport<double>& r, const std::optional<DistortionSpec<double>>& spec) {
  ojson j;
  j["paths"] = r.paths;
  j["seed"] = r.seed;
  j["max_rel_deviation"] = r.max_rel_deviation;
  j["max_entry_zscore"] = r.max_entry_zscore;
  ojson steps = ojson::array();
  for (std::size_t k = 0; k < r.empirical_err_cov.size(); ++k) {
    ojson s;
    s["t"] = k + 1;
    s["distortion"] = r.distortion_series[k];
    s["predicted_distortion"] = r.predicted_distortion[k];
    s["distortion_stderr"] = r.distortion_stderr[k];
    if (spec && spec->mode == ConstraintMode::Hard && spec->values.size() == 1) s["D"] = spec->values.front();
    else if (spec && spec->mode == ConstraintMode::Hard) s["D"] = spec->value_at(static_cast<int>(k));
    s["empirical_err_cov"] = matrix_to_json(r.empirical_err_cov[k]);
    s["predicted"] = matrix_to_json(r.predicted[k]);
    steps.push_back(std::move(s));
  }
  j["steps"] = steps;
  return j;
}

std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace srdkit::cli
