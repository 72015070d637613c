#include "tubelab/model.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

namespace tubelab {

void MultirotorParams::validate() const {
  const double values[] = {mass, gravity, attitude_time_constant, linear_drag,
                           thrust_min, thrust_max, tilt_max};
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidParameter, "multirotor parameter is not finite");
  }
  if (mass <= 0.0) throw Error(ErrorCode::InvalidParameter, "mass must be positive");
  if (attitude_time_constant <= 0.0)
    throw Error(ErrorCode::InvalidParameter, "attitude_time_constant must be positive");
  if (linear_drag < 0.0) throw Error(ErrorCode::InvalidParameter, "linear_drag must be non-negative");
  if (!(thrust_min < hover_thrust() && hover_thrust() < thrust_max))
    throw Error(ErrorCode::InvalidParameter, "hover thrust must lie strictly inside [thrust_min, thrust_max]");
  if (tilt_max <= 0.0) throw Error(ErrorCode::InvalidParameter, "tilt_max must be positive");
}

Vec LinearSystem::step(const Vec& x, const Vec& u) const {
  if (u_eq.size() == 0) return A * x + B * u;
  return A * x + B * (u - u_eq);
}

void LinearSystem::validate() const {
  if (A.rows() != A.cols() || B.rows() != A.rows() || C.cols() != A.rows())
    throw Error(ErrorCode::DimensionMismatch, "linear system dimensions are inconsistent");
  if (u_eq.size() != 0 && u_eq.size() != B.cols())
    throw Error(ErrorCode::DimensionMismatch, "equilibrium input has wrong size");
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidParameter, "dt must be positive");
  if (!A.allFinite() || !B.allFinite() || !C.allFinite())
    throw Error(ErrorCode::InvalidParameter, "linear system has non-finite entries");
}

Action hover_input(const MultirotorParams& params) { return Action(0.0, 0.0, params.hover_thrust()); }

void continuous_linear_model(const MultirotorParams& params, Mat& Ac, Mat& Bc) {
  const double g = params.gravity;
  const double d = params.linear_drag;
  const double tau = params.attitude_time_constant;
  Ac = Mat::Zero(kStateDim, kStateDim);
  Bc = Mat::Zero(kStateDim, kInputDim);
  Ac.block<3, 3>(0, 3) = Mat3::Identity();
  Ac.block<3, 3>(3, 3) = -d * Mat3::Identity();
  Ac(3, 7) = g;   // v_x <- pitch
  Ac(4, 6) = -g;  // v_y <- roll
  Ac(6, 6) = -1.0 / tau;
  Ac(7, 7) = -1.0 / tau;
  Bc(6, 0) = 1.0 / tau;
  Bc(7, 1) = 1.0 / tau;
  Bc(5, 2) = 1.0 / params.mass;
}

void discretize(const Mat& Ac, const Mat& Bc, double dt, Mat& A, Mat& B) {
  const Eigen::Index n = Ac.rows();
  const Eigen::Index m = Bc.cols();
  Mat aug = Mat::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = Ac * dt;
  aug.topRightCorner(n, m) = Bc * dt;
  const Mat e = aug.exp();
  A = e.topLeftCorner(n, n);
  B = e.topRightCorner(n, m);
}

LinearSystem build_linear_model(const MultirotorParams& params, double dt) {
  params.validate();
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorCode::InvalidParameter, "dt must be positive and finite");
  Mat Ac, Bc;
  continuous_linear_model(params, Ac, Bc);
  LinearSystem sys;
  discretize(Ac, Bc, dt, sys.A, sys.B);
  sys.C = Mat::Identity(kStateDim, kStateDim);
  sys.dt = dt;
  sys.u_eq = hover_input(params);
  if (!sys.A.allFinite() || !sys.B.allFinite())
    throw Error(ErrorCode::InvalidParameter, "discretized model is not finite");
  return sys;
}

Mat force_input_matrix(const MultirotorParams& params, double dt) {
  Mat Ac, Bc;
  continuous_linear_model(params, Ac, Bc);
  Mat Bf = Mat::Zero(kStateDim, 3);
  Bf.block<3, 3>(3, 0) = Mat3::Identity() / params.mass;
  Mat A, B;
  discretize(Ac, Bf, dt, A, B);
  return B;
}

Mat3 body_rotation(double roll, double pitch) {
  return (Eigen::AngleAxisd(pitch, Vec3::UnitY()) * Eigen::AngleAxisd(roll, Vec3::UnitX())).toRotationMatrix();
}

State nonlinear_derivative(const State& x, const Action& u, const Vec3& wind_force,
                           const MultirotorParams& params) {
  const double roll = x(6);
  const double pitch = x(7);
  // R(roll, pitch) e_z with yaw = 0.
  const Vec3 thrust_dir(std::cos(roll) * std::sin(pitch), -std::sin(roll), std::cos(roll) * std::cos(pitch));
  const Vec3 v = x.segment<3>(3);
  const Vec3 acc = thrust_dir * (u(2) / params.mass) - Vec3(0.0, 0.0, params.gravity) -
                   params.linear_drag * v + wind_force / params.mass;
  State dx;
  dx.segment<3>(0) = v;
  dx.segment<3>(3) = acc;
  dx(6) = (u(0) - roll) / params.attitude_time_constant;
  dx(7) = (u(1) - pitch) / params.attitude_time_constant;
  return dx;
}

State step_nonlinear(const State& x, const Action& u, const Vec3& wind_force,
                     const MultirotorParams& params, double dt_sim) {
  const State k1 = nonlinear_derivative(x, u, wind_force, params);
  const State k2 = nonlinear_derivative(x + 0.5 * dt_sim * k1, u, wind_force, params);
  const State k3 = nonlinear_derivative(x + 0.5 * dt_sim * k2, u, wind_force, params);
  const State k4 = nonlinear_derivative(x + dt_sim * k3, u, wind_force, params);
  return x + (dt_sim / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

State propagate_nonlinear(const State& x, const Action& u, const Vec3& wind_force,
                          const MultirotorParams& params, double dt, double dt_sim) {
  if (!(dt_sim > 0.0) || dt_sim > dt + 1e-12)
    throw Error(ErrorCode::InvalidParameter, "dt_sim must be in (0, dt]");
  const int steps = static_cast<int>(std::lround(dt / dt_sim));
  const double h = dt / steps;
  State out = x;
  for (int i = 0; i < steps; ++i) out = step_nonlinear(out, u, wind_force, params, h);
  return out;
}

}  // namespace tubelab
