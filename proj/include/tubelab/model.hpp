#pragma once

#include "tubelab/common.hpp"

namespace tubelab {

struct MultirotorParams {
  double mass = 1.0;                     // kg
  double gravity = 9.81;                 // m/s^2
  double attitude_time_constant = 0.15;  // s
  double linear_drag = 0.1;              // 1/s
  double thrust_min = 0.0;               // N
  double thrust_max = 2.0 * 9.81;        // N
  double tilt_max = 0.5;                 // rad

  double hover_thrust() const { return mass * gravity; }
  void validate() const;
};

// Discrete-time x+ = A x + B (u - u_eq) + w, o = C x.
// u_eq is the equilibrium input the model was linearized about; inputs handed
// to the model are absolute and the offset is removed here.
struct LinearSystem {
  Mat A;
  Mat B;
  Mat C;
  double dt = 0.0;
  Vec u_eq;

  int nx() const { return static_cast<int>(A.rows()); }
  int nu() const { return static_cast<int>(B.cols()); }
  int no() const { return static_cast<int>(C.rows()); }

  Vec step(const Vec& x, const Vec& u) const;
  void validate() const;
};

Action hover_input(const MultirotorParams& params);

// Continuous-time hover linearization (A_c, B_c) with Delta-thrust input.
void continuous_linear_model(const MultirotorParams& params, Mat& Ac, Mat& Bc);

// Zero-order-hold discretization via the exponential of [A_c B_c; 0 0].
void discretize(const Mat& Ac, const Mat& Bc, double dt, Mat& A, Mat& B);

LinearSystem build_linear_model(const MultirotorParams& params, double dt);

// Discrete map from a constant external force (N, world frame) held over dt to
// the state increment.
Mat force_input_matrix(const MultirotorParams& params, double dt);

State nonlinear_derivative(const State& x, const Action& u, const Vec3& wind_force,
                           const MultirotorParams& params);

// One RK4 step of the full nonlinear model. Yaw is fixed at zero.
State step_nonlinear(const State& x, const Action& u, const Vec3& wind_force,
                     const MultirotorParams& params, double dt_sim);

// Zero-order hold of u over dt, integrated with dt_sim substeps.
State propagate_nonlinear(const State& x, const Action& u, const Vec3& wind_force,
                          const MultirotorParams& params, double dt, double dt_sim);

// Body-to-world rotation for roll/pitch with zero yaw, R = R_y(pitch) R_x(roll).
Mat3 body_rotation(double roll, double pitch);

}  // namespace tubelab
