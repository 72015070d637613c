#include <doctest.h>

#include "tubelab/model.hpp"

#include <cmath>

using namespace tubelab;

namespace {

// Classic RK4 on the augmented linear ODE d/dt [x; u] = [Ac Bc; 0 0][x; u].
void rk4_reference(const Mat& Ac, const Mat& Bc, double dt, int steps, Mat& A, Mat& B) {
  const int n = static_cast<int>(Ac.rows()), m = static_cast<int>(Bc.cols());
  Mat M = Mat::Zero(n + m, n + m);
  M.topLeftCorner(n, n) = Ac;
  M.topRightCorner(n, m) = Bc;
  Mat Phi = Mat::Identity(n + m, n + m);
  const double h = dt / steps;
  for (int s = 0; s < steps; ++s) {
    const Mat k1 = M * Phi;
    const Mat k2 = M * (Phi + 0.5 * h * k1);
    const Mat k3 = M * (Phi + 0.5 * h * k2);
    const Mat k4 = M * (Phi + h * k3);
    Phi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  A = Phi.topLeftCorner(n, n);
  B = Phi.topRightCorner(n, m);
}

// Largest one-step gap between the nonlinear and linear models over random
// perturbations of magnitude `amp` about hover.
double linearization_gap(double amp, std::uint64_t seed) {
  const MultirotorParams p;
  const LinearSystem sys = build_linear_model(p, 0.1);
  const Action u_hover = hover_input(p);
  Rng rng(seed);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    State x;
    for (int i = 0; i < kStateDim; ++i) x(i) = uniform(rng, -amp, amp);
    Action u = u_hover;
    for (int i = 0; i < kInputDim; ++i) u(i) += uniform(rng, -amp, amp);
    const State xn = propagate_nonlinear(x, u, Vec3::Zero(), p, 0.1, 0.001);
    const Vec xl = sys.step(x, u);
    worst = std::max(worst, (xn - xl).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

TEST_CASE("hover is an equilibrium of the nonlinear model") {
  const MultirotorParams p;
  State x = State::Zero();
  x(2) = 2.5;
  const State xn = propagate_nonlinear(x, hover_input(p), Vec3::Zero(), p, 0.1, 0.01);
  CHECK((xn - x).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(nonlinear_derivative(x, hover_input(p), Vec3::Zero(), p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero-order-hold discretization matches fine RK4 integration") {
  const MultirotorParams p;
  Mat Ac, Bc, A, B, Ar, Br;
  continuous_linear_model(p, Ac, Bc);
  discretize(Ac, Bc, 0.1, A, B);
  rk4_reference(Ac, Bc, 0.1, 1000, Ar, Br);
  CHECK((A - Ar).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((B - Br).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("discrete model is the linearization of the nonlinear step") {
  const double gap_small = linearization_gap(0.005, 7);
  CHECK(gap_small < 1e-4);
  // Second-order residual: doubling the amplitude roughly quadruples the gap.
  const double gap_double = linearization_gap(0.01, 7);
  CHECK(gap_double / gap_small == doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("body rotation is a proper rotation") {
  const Mat3 R = body_rotation(0.3, -0.2);
  CHECK((R * R.transpose() - Mat3::Identity()).norm() < 1e-12);
  CHECK(R.determinant() == doctest::Approx(1.0));
  CHECK((body_rotation(0, 0) - Mat3::Identity()).norm() < 1e-15);
}

TEST_CASE("a constant wind force accelerates the airframe") {
  const MultirotorParams p;
  const Mat F = force_input_matrix(p, 0.1);
  CHECK(F.rows() == kStateDim);
  CHECK(F.cols() == 3);
  State x = State::Zero();
  x(2) = 2.0;
  const Vec3 wind(0.5, 0.0, 0.0);
  const State xn = propagate_nonlinear(x, hover_input(p), wind, p, 0.1, 0.001);
  const Vec lin = x + F * wind;
  CHECK((xn - lin).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(xn(3) > 0.0);
}

TEST_CASE("invalid parameters are rejected") {
  MultirotorParams p;
  p.mass = -1.0;
  CHECK_THROWS_AS(p.validate(), Error);
  MultirotorParams q;
  CHECK_THROWS_AS(build_linear_model(q, 0.0), Error);
  CHECK_THROWS_AS(propagate_nonlinear(State::Zero(), hover_input(q), Vec3::Zero(), q, 0.1, 0.2), Error);
}
