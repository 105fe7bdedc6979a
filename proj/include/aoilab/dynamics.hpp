#ifndef AOILAB_DYNAMICS_HPP
#define AOILAB_DYNAMICS_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <variant>

#include "aoilab/rng.hpp"

namespace aoilab::dynamics {

enum class SystemKind { linear, cartpole };

std::string_view to_string(SystemKind kind);
SystemKind parse_system(std::string_view name);

/// Measurement vectors never exceed six entries, so they live on the stack.
using MeasVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 6, 1>;

class SingularParameters : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// ---------------------------------------------------------------------------
// 2-D Newtonian vehicle

struct LinearVehicleState {
  double px = 0.0;
  double py = 0.0;
  double vx = 0.0;
  double vy = 0.0;

  Eigen::Vector4d vec() const { return {px, py, vx, vy}; }
  static LinearVehicleState from(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
};

struct LinearControl {
  double ux = 0.0;
  double uy = 0.0;
};

struct LinearParams {
  double dt = 0.1;
  double noise_var = 0.2;            // diagonal of cov(w_k)
  double position_limit = 1000.0;
  double velocity_limit = 10.0;
  double control_limit = 3.0;
  bool clamp = true;                 // saturate to the stated ranges after each step
};

inline constexpr int kLinearStateDim = 4;
inline constexpr int kLinearMeasDim = 6;

/// Transition matrix A and input matrix B of the discretised kinematics.
Eigen::Matrix4d linear_transition(double dt);
Eigen::Matrix<double, 4, 2> linear_input(double dt);

/// One step of x' = A x + B u + w, w ~ N(0, noise_var I), then range-clamped.
/// Pass `noise_rng == nullptr` for the noise-free update.
LinearVehicleState step_linear(const LinearVehicleState& state, const LinearControl& u,
                               Rng* noise_rng, const LinearParams& params = {});

LinearControl sample_linear_control(Rng& rng, const LinearParams& params = {});

// ---------------------------------------------------------------------------
// Cartpole

struct CartpoleState {
  double x = 0.0;
  double x_dot = 0.0;
  double theta = 0.0;
  double theta_dot = 0.0;
};

struct CartpoleParams {
  double l = 1.0;     // half pole length
  double mc = 5.0;
  double mp = 1.0;
  double g = 9.8;
  double force_mag = 10.0;
  double dt = 0.01;
  double velocity_limit = 10.0;
  double initial_spread = 0.05;  // initial state entries ~ U(-spread, spread)

  void validate() const;
};

inline constexpr int kCartpoleMeasDim = 4;
inline constexpr int kCartpoleEstDim = 3;

struct CartpoleAccel {
  double theta_ddot = 0.0;
  double x_ddot = 0.0;
};

CartpoleAccel cartpole_accels(const CartpoleState& state, double force,
                              const CartpoleParams& params = {});

/// Semi-implicit Euler: velocities from the accelerations first, then positions
/// from the updated velocities. x_dot saturates at +/- velocity_limit.
CartpoleState step_cartpole(const CartpoleState& state, double force,
                            const CartpoleParams& params = {});

double sample_cartpole_force(Rng& rng, const CartpoleParams& params = {});

// ---------------------------------------------------------------------------
// Measurements

struct Measurement {
  MeasVec values;
  std::int64_t gen_slot = 0;

  friend bool operator==(const Measurement& a, const Measurement& b) {
    return a.gen_slot == b.gen_slot && a.values.size() == b.values.size() &&
           a.values == b.values;
  }
};

/// [px, py, vx, vy, ux, uy]
Measurement measure(const LinearVehicleState& state, const LinearControl& u, std::int64_t gen_slot);
/// [theta, theta_dot, x_dot, F]
Measurement measure(const CartpoleState& state, double force, std::int64_t gen_slot);

int measurement_dim(SystemKind kind);
/// Leading entries of the measurement that the estimators reconstruct.
int estimated_dim(SystemKind kind);
/// Number of trailing control entries in the measurement.
int control_dim(SystemKind kind);

// ---------------------------------------------------------------------------
// Plant: either system behind one interface, as the episode driver sees it.

struct PlantParams {
  LinearParams linear;
  CartpoleParams cartpole;
};

class Plant {
 public:
  Plant(SystemKind kind, const PlantParams& params, Rng& init_rng);

  SystemKind kind() const { return kind_; }
  const PlantParams& params() const { return params_; }

  /// Draws the control applied from the current slot to the next.
  void choose_control(Rng& control_rng);
  Measurement measure(std::int64_t gen_slot) const;
  void advance(Rng& noise_rng);

  const std::variant<LinearVehicleState, CartpoleState>& state() const { return state_; }

 private:
  SystemKind kind_;
  PlantParams params_;
  std::variant<LinearVehicleState, CartpoleState> state_;
  LinearControl linear_u_;
  double force_ = 0.0;
};

}  // namespace aoilab::dynamics

#endif  // AOILAB_DYNAMICS_HPP
