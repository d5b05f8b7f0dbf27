#pragma once

// Example models: a linearized double pendulum (stationary SRD curve) and a
// spin-stabilized satellite (finite-horizon down-link schedule). Physical
// parameters are implementer choices; see the `parameters` field.

#include "srdkit/model.hpp"
#include "srdkit/sim.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace srdkit {

struct Preset {
  std::string name;
  double dt = 0.0;
  std::map<std::string, double> parameters;
  MatrixXd A_cont;
  GaussMarkovModel<double> model;
  DistortionSpec<double> spec;
  std::vector<std::string> labels;
};

struct PendulumParams {
  double m1 = 1.0, m2 = 1.0, l1 = 1.0, l2 = 1.0, c1 = 0.1, c2 = 0.1, g = 9.81;
  double noise = 1.0;  // continuous disturbance intensity, W_c = noise * I
  double D = 0.05;
};

struct SatelliteParams {
  double I1 = 1.0, I2 = 2.0, I3 = 3.0, omega0 = 1.0;
  double noise = 1.0;
  double p0 = 0.01;
  int horizon = 120;
  int window_begin = 50;  // first step (1-based) of the low-distortion window
  int window_end = 70;    // last step of the window
  double D_high = 100.0;
  double D_low = 0.05;
};

/// State (theta1, theta2, omega1, omega2).
inline MatrixXd pendulum_matrix(const PendulumParams& p) {
  MatrixXd a = MatrixXd::Zero(4, 4);
  a(0, 2) = 1.0;
  a(1, 3) = 1.0;
  a(2, 0) = -(p.m1 + p.m2) * p.g / (p.m1 * p.l1);
  a(2, 1) = p.m2 * p.g / (p.m1 * p.l1);
  a(2, 2) = -p.c1;
  a(3, 0) = (p.m1 + p.m2) * p.g / (p.m1 * p.l2);
  a(3, 1) = -(p.m1 + p.m2) * p.g / (p.m1 * p.l2);
  a(3, 3) = -p.c2;
  return a;
}

/// Angular velocity (omega1, omega2, omega3) around the nominal spin (omega0, 0, 0).
inline MatrixXd satellite_matrix(const SatelliteParams& p) {
  MatrixXd a = MatrixXd::Identity(3, 3);
  a(1, 2) = (p.I3 - p.I1) / p.I2 * p.omega0;
  a(2, 1) = (p.I1 - p.I2) / p.I3 * p.omega0;
  return a;
}

inline Preset pendulum_preset(double dt = 0.01, const PendulumParams& p = {}) {
  Preset out;
  out.name = "pendulum";
  out.dt = dt;
  out.parameters = {{"m1", p.m1}, {"m2", p.m2}, {"l1", p.l1},       {"l2", p.l2},
                    {"c1", p.c1}, {"c2", p.c2}, {"g", p.g},         {"noise", p.noise}};
  out.A_cont = pendulum_matrix(p);
  out.model = GaussMarkovModel<double>::stationary_model(tustin_discretize(out.A_cont, dt),
                                                         MatrixXd::Identity(4, 4) * (p.noise * dt));
  out.spec = DistortionSpec<double>::hard({MatrixXd::Identity(4, 4)}, {p.D});
  out.labels = {"theta1", "theta2", "omega1", "omega2"};
  return out;
}

inline Preset satellite_preset(double dt = 0.01, const SatelliteParams& p = {}) {
  if (p.window_begin < 1 || p.window_end < p.window_begin || p.window_end > p.horizon)
    throw std::invalid_argument("satellite window must lie inside the horizon");
  Preset out;
  out.name = "satellite";
  out.dt = dt;
  out.parameters = {{"I1", p.I1},       {"I2", p.I2}, {"I3", p.I3},
                    {"omega0", p.omega0}, {"noise", p.noise}, {"p0", p.p0}};
  out.A_cont = satellite_matrix(p);
  out.model = GaussMarkovModel<double>::time_invariant(tustin_discretize(out.A_cont, dt),
                                                       MatrixXd::Identity(3, 3) * (p.noise * dt),
                                                       MatrixXd::Identity(3, 3) * p.p0, p.horizon);
  std::vector<double> d(static_cast<std::size_t>(p.horizon), p.D_high);
  for (int t = p.window_begin; t <= p.window_end; ++t) d[static_cast<std::size_t>(t - 1)] = p.D_low;
  out.spec = DistortionSpec<double>::hard({MatrixXd::Identity(3, 3)}, std::move(d));
  out.labels = {"omega1", "omega2", "omega3"};
  return out;
}

inline Preset make_preset(const std::string& name, double dt) {
  if (name == "pendulum") return pendulum_preset(dt);
  if (name == "satellite") return satellite_preset(dt);
  throw std::invalid_argument("unknown preset '" + name + "' (expected pendulum or satellite)");
}

}  // namespace srdkit
