#include "aoilab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace aoilab::dynamics {

std::string_view to_string(SystemKind kind) {
  return kind == SystemKind::linear ? "linear" : "cartpole";
}

SystemKind parse_system(std::string_view name) {
  if (name == "linear") return SystemKind::linear;
  if (name == "cartpole") return SystemKind::cartpole;
  throw std::invalid_argument("unknown system '" + std::string(name) + "'");
}

Eigen::Matrix4d linear_transition(double dt) {
  Eigen::Matrix4d a = Eigen::Matrix4d::Identity();
  a(0, 2) = dt;
  a(1, 3) = dt;
  return a;
}

Eigen::Matrix<double, 4, 2> linear_input(double dt) {
  Eigen::Matrix<double, 4, 2> b = Eigen::Matrix<double, 4, 2>::Zero();
  b(0, 0) = 0.5 * dt * dt;
  b(1, 1) = 0.5 * dt * dt;
  b(2, 0) = dt;
  b(3, 1) = dt;
  return b;
}

LinearVehicleState step_linear(const LinearVehicleState& s, const LinearControl& u, Rng* noise_rng,
                               const LinearParams& params) {
  if (!std::isfinite(s.px) || !std::isfinite(s.py) || !std::isfinite(s.vx) ||
      !std::isfinite(s.vy)) {
    throw std::invalid_argument("step_linear: non-finite state");
  }
  if (!(params.dt > 0.0)) throw std::invalid_argument("step_linear: dt must be positive");

  const double dt = params.dt;
  const double half_dt2 = 0.5 * dt * dt;
  LinearVehicleState out{
      s.px + s.vx * dt + u.ux * half_dt2,
      s.py + s.vy * dt + u.uy * half_dt2,
      s.vx + u.ux * dt,
      s.vy + u.uy * dt,
  };
  if (noise_rng != nullptr) {
    std::normal_distribution<double> w(0.0, std::sqrt(params.noise_var));
    out.px += w(*noise_rng);
    out.py += w(*noise_rng);
    out.vx += w(*noise_rng);
    out.vy += w(*noise_rng);
  }
  if (params.clamp) {
    const double pl = params.position_limit;
    const double vl = params.velocity_limit;
    out.px = std::clamp(out.px, -pl, pl);
    out.py = std::clamp(out.py, -pl, pl);
    out.vx = std::clamp(out.vx, -vl, vl);
    out.vy = std::clamp(out.vy, -vl, vl);
  }
  return out;
}

LinearControl sample_linear_control(Rng& rng, const LinearParams& params) {
  std::uniform_real_distribution<double> u(-params.control_limit, params.control_limit);
  const double ux = u(rng);
  const double uy = u(rng);
  return {ux, uy};
}

void CartpoleParams::validate() const {
  if (!(l > 0.0) || !(mc > 0.0) || !(mp >= 0.0) || !(dt > 0.0)) {
    throw std::invalid_argument("CartpoleParams: require l > 0, mc > 0, mp >= 0, dt > 0");
  }
}

CartpoleAccel cartpole_accels(const CartpoleState& s, double force, const CartpoleParams& p) {
  const double total = p.mc + p.mp;
  const double sin_t = std::sin(s.theta);
  const double cos_t = std::cos(s.theta);
  const double denom = p.l * (4.0 / 3.0 - p.mp * cos_t * cos_t / total);
  if (!(denom > 0.0)) throw SingularParameters("cartpole_accels: non-positive denominator");

  const double theta_ddot =
      (p.g * sin_t + cos_t * ((-force - p.mp * p.l * s.theta_dot * s.theta_dot * sin_t) / total)) /
      denom;
  const double x_ddot =
      (force + p.mp * p.l * (s.theta_dot * s.theta_dot * sin_t - theta_ddot * cos_t)) / total;
  return {theta_ddot, x_ddot};
}

CartpoleState step_cartpole(const CartpoleState& s, double force, const CartpoleParams& p) {
  const CartpoleAccel acc = cartpole_accels(s, force, p);
  CartpoleState out;
  out.x_dot = std::clamp(s.x_dot + p.dt * acc.x_ddot, -p.velocity_limit, p.velocity_limit);
  out.theta_dot = s.theta_dot + p.dt * acc.theta_ddot;
  out.x = s.x + p.dt * out.x_dot;
  out.theta = s.theta + p.dt * out.theta_dot;
  return out;
}

double sample_cartpole_force(Rng& rng, const CartpoleParams& params) {
  std::bernoulli_distribution forward(0.5);
  return forward(rng) ? params.force_mag : -params.force_mag;
}

Measurement measure(const LinearVehicleState& s, const LinearControl& u, std::int64_t gen_slot) {
  Measurement m;
  m.values.resize(kLinearMeasDim);
  m.values << s.px, s.py, s.vx, s.vy, u.ux, u.uy;
  m.gen_slot = gen_slot;
  return m;
}

Measurement measure(const CartpoleState& s, double force, std::int64_t gen_slot) {
  Measurement m;
  m.values.resize(kCartpoleMeasDim);
  m.values << s.theta, s.theta_dot, s.x_dot, force;
  m.gen_slot = gen_slot;
  return m;
}

int measurement_dim(SystemKind kind) {
  return kind == SystemKind::linear ? kLinearMeasDim : kCartpoleMeasDim;
}

int estimated_dim(SystemKind kind) {
  return kind == SystemKind::linear ? kLinearStateDim : kCartpoleEstDim;
}

int control_dim(SystemKind kind) { return kind == SystemKind::linear ? 2 : 1; }

// ---------------------------------------------------------------------------

Plant::Plant(SystemKind kind, const PlantParams& params, Rng& init_rng)
    : kind_(kind), params_(params) {
  if (kind == SystemKind::linear) {
    // The vehicle starts at rest at the origin.
    state_ = LinearVehicleState{};
  } else {
    params_.cartpole.validate();
    std::uniform_real_distribution<double> u(-params_.cartpole.initial_spread,
                                             params_.cartpole.initial_spread);
    CartpoleState s;
    s.x = u(init_rng);
    s.x_dot = u(init_rng);
    s.theta = u(init_rng);
    s.theta_dot = u(init_rng);
    state_ = s;
  }
}

void Plant::choose_control(Rng& control_rng) {
  if (kind_ == SystemKind::linear) {
    linear_u_ = sample_linear_control(control_rng, params_.linear);
  } else {
    force_ = sample_cartpole_force(control_rng, params_.cartpole);
  }
}

Measurement Plant::measure(std::int64_t gen_slot) const {
  if (kind_ == SystemKind::linear) {
    return dynamics::measure(std::get<LinearVehicleState>(state_), linear_u_, gen_slot);
  }
  return dynamics::measure(std::get<CartpoleState>(state_), force_, gen_slot);
}

void Plant::advance(Rng& noise_rng) {
  if (kind_ == SystemKind::linear) {
    state_ = step_linear(std::get<LinearVehicleState>(state_), linear_u_, &noise_rng,
                         params_.linear);
  } else {
    state_ = step_cartpole(std::get<CartpoleState>(state_), force_, params_.cartpole);
  }
}

}  // namespace aoilab::dynamics
