#include <doctest.h>

#include "tubelab/config.hpp"
#include "tubelab/control.hpp"
#include "tubelab/experiment.hpp"

#include <cmath>

using namespace tubelab;

namespace {

const Lab& default_lab() {
  static const Lab lab = make_lab(RunConfig{});
  return lab;
}

std::vector<State> constant_window(const State& r, int horizon) { return std::vector<State>(horizon + 1, r); }

State hover_at(double z) {
  State x = State::Zero();
  x(2) = z;
  return x;
}

// First input of the unconstrained finite-horizon tracking problem, by a
// backward Riccati recursion with an affine term.
Vec lq_first_input(const LinearSystem& sys, const Mat& Q, const Mat& R, const Mat& P, const Vec& x0,
                   const std::vector<State>& ref) {
  const int N = static_cast<int>(ref.size()) - 1;
  Mat Pk = P;
  Vec pk = P * ref[N];
  const Mat& A = sys.A;
  const Mat& B = sys.B;
  for (int i = N - 1; i >= 1; --i) {
    const Mat G = (R + B.transpose() * Pk * B).inverse();
    const Mat Pn = Q + A.transpose() * Pk * A - A.transpose() * Pk * B * G * B.transpose() * Pk * A;
    const Vec pn = Q * ref[i] + A.transpose() * pk - A.transpose() * Pk * B * G * B.transpose() * pk;
    Pk = Pn;
    pk = pn;
  }
  const Mat G = (R + B.transpose() * Pk * B).inverse();
  return -G * (B.transpose() * Pk * A * x0 - B.transpose() * pk);
}

}  // namespace

TEST_CASE("QP solver on a small box-constrained problem") {
  Mat P(2, 2);
  P << 4, 1, 1, 2;
  const Mat A = Mat::Identity(2, 2);
  QpSolver qp(P, A);
  Vec q(2);
  q << 1, 1;
  qp.set_data(q, Vec::Constant(2, -10), Vec::Constant(2, 10));
  auto r = qp.solve();
  REQUIRE(r.status == QpStatus::Solved);
  const Vec expected = -P.ldlt().solve(q);
  CHECK((r.x - expected).cwiseAbs().maxCoeff() < 1e-6);

  // Active bound: x0 >= 1.
  Vec lo(2);
  lo << 1, -10;
  qp.set_data(q, lo, Vec::Constant(2, 10));
  r = qp.solve();
  REQUIRE(r.status == QpStatus::Solved);
  CHECK(r.x(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.x(1) == doctest::Approx(-1.0).epsilon(1e-6));  // argmin of 2 + x1 + x1^2 + x1
}

TEST_CASE("QP solver reports primal infeasibility") {
  Mat A(2, 1);
  A << 1, 1;
  QpSolver qp(Mat::Identity(1, 1), A);
  Vec l(2), u(2);
  l << 1, -5;
  u << 5, -1;
  qp.set_data(Vec::Zero(1), l, u);
  CHECK(qp.solve().status == QpStatus::PrimalInfeasible);
}

TEST_CASE("MPC at rest on the reference returns the hover input") {
  const Lab& lab = default_lab();
  const State r = hover_at(2.5);
  const auto win = constant_window(r, lab.expert.horizon);
  const auto sol = solve_rtmpc(r, win, lab.syn, lab.inputs.sys, lab.inputs.cost, lab.expert.horizon);
  CHECK((sol.u_bar_star - lab.inputs.sys.u_eq).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(sol.objective < 1e-8);
  CHECK((sol.x_bar_star - r).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("MPC with inactive constraints matches the LQ tracking law") {
  const Lab& lab = default_lab();
  SynthesisResult syn = lab.syn;
  const Box big = Box::symmetric(Vec::Constant(kStateDim, 1e6));
  syn.X_bar = syn.X_bar_N = big;
  syn.U_bar = Box::symmetric(Vec::Constant(kInputDim, 1e6));
  syn.S_ctrl = Box::zero(kStateDim);
  const int N = 20;
  State x0 = hover_at(2.0);
  x0(0) = 0.4;
  x0(4) = -0.2;
  std::vector<State> ref;
  for (int i = 0; i <= N; ++i) {
    State ri = hover_at(2.5);
    ri(0) = 0.05 * i;
    ref.push_back(ri);
  }
  const auto sol = solve_rtmpc(x0, ref, syn, lab.inputs.sys, lab.inputs.cost, N);
  const Vec du = lq_first_input(lab.inputs.sys, lab.inputs.cost.Q, lab.inputs.cost.R, syn.P, x0, ref);
  const Vec du_mpc = sol.u_bar_star - lab.inputs.sys.u_eq;
  CHECK((du_mpc - du).cwiseAbs().maxCoeff() < 1e-4 * std::max(1.0, du.cwiseAbs().maxCoeff()));
  CHECK((sol.x_bar_star - x0).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("MPC keeps the nominal plan inside the tightened set") {
  const Lab& lab = default_lab();
  const double z_top = lab.syn.X_bar.hi()(2);
  const State r = hover_at(z_top + 3.0);  // unreachable altitude
  const auto win = constant_window(r, lab.expert.horizon);
  const auto sol = solve_rtmpc(hover_at(2.5), win, lab.syn, lab.inputs.sys, lab.inputs.cost, lab.expert.horizon);
  double highest = -1e9;
  for (const Vec& x : sol.predicted_states) {
    CHECK(contains(lab.syn.X_bar, x, 1e-5));
    highest = std::max(highest, x(2));
  }
  CHECK(highest > z_top - 1e-2);
  for (const Vec& u : sol.predicted_inputs)
    CHECK(contains(lab.syn.U_bar, Vec(u - lab.inputs.sys.u_eq), 1e-5));
}

TEST_CASE("MPC rejects an estimate outside the tightened set") {
  const Lab& lab = default_lab();
  const State far = hover_at(lab.inputs.X.hi()(2) + 10.0);
  const auto win = constant_window(hover_at(2.5), lab.expert.horizon);
  try {
    solve_rtmpc(far, win, lab.syn, lab.inputs.sys, lab.inputs.cost, lab.expert.horizon);
    FAIL("expected Infeasible");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Infeasible);
  }
}

TEST_CASE("ancillary law and saturation") {
  const Lab& lab = default_lab();
  const Vec xb = hover_at(2.0), ub = lab.inputs.sys.u_eq;
  CHECK(ancillary(xb, xb, ub, lab.syn.K) == ub);
  Vec x = xb;
  x(0) += 0.1;
  CHECK((ancillary(x, xb, ub, lab.syn.K) - (ub + lab.syn.K * (x - xb))).norm() < 1e-15);

  const Box U(Eigen::Vector2d(-1, -1), Eigen::Vector2d(1, 1));
  CHECK(saturate(Eigen::Vector2d(0.5, -0.5), U) == Eigen::Vector2d(0.5, -0.5));
  CHECK(saturate(Eigen::Vector2d(3, -3), U) == Eigen::Vector2d(1, -1));
}

TEST_CASE("observer error contracts at the designed rate") {
  LinearSystem s1{Mat::Constant(1, 1, 0.9), Mat::Constant(1, 1, 1.0), Mat::Identity(1, 1), 0.1, Vec::Zero(1)};
  EstimatorState est{Vec::Constant(1, 1.0)};
  Vec x = Vec::Zero(1);
  const Mat L = Mat::Constant(1, 1, 0.4);
  for (int k = 0; k < 5; ++k) {
    const Vec u = Vec::Zero(1);
    const double e0 = est.x_hat(0) - x(0);
    est = observer_step(est, u, s1.C * x, s1, L);
    x = s1.step(x, u);
    CHECK(est.x_hat(0) - x(0) == doctest::Approx(0.5 * e0).epsilon(1e-12));
  }

  const Lab& lab = default_lab();
  const LinearSystem& sys = lab.inputs.sys;
  Vec xs = hover_at(2.0);
  EstimatorState e8{xs + Vec::Constant(kStateDim, 0.2)};
  const Vec u = sys.u_eq;
  const double before = (e8.x_hat - xs).norm();
  e8 = observer_step(e8, u, sys.C * xs, sys, lab.syn.L);
  xs = sys.step(xs, u);
  CHECK((e8.x_hat - xs).norm() / before == doctest::Approx(std::exp(-lab.cfg.mpc.observer_pole_rate * sys.dt)).epsilon(1e-6));
}

TEST_CASE("expert keeps the linear plant inside the tube") {
  const Lab& lab = default_lab();
  ExpertController expert(lab.inputs.sys, lab.inputs.cost, lab.syn, lab.U_abs, lab.expert);
  EpisodeOptions opts = lab.episode;
  opts.plant = PlantMode::Linear;
  opts.keep_trace = true;
  int steps = 0, inside = 0, failures = 0;
  Rng rng(99);
  for (int ep = 0; ep < 100; ++ep) {
    DisturbanceRealization dist;
    dist.noise = NoiseMode::Bounded;
    dist.V = lab.inputs.uncertainty.V;
    dist.process_box = lab.inputs.uncertainty.W;
    dist.noise_seed = 1000 + ep;
    const State x0 = sample_initial_state(lab.ref, 0.0, rng);
    expert.reset();
    const auto res = run_episode(expert, lab.ref, dist, x0, opts, lab.expert.horizon);
    if (!res.success) ++failures;
    for (const auto& rec : res.trace) {
      if (!rec.info.x_bar) continue;
      ++steps;
      if (contains(lab.syn.Z, Vec(rec.x - *rec.info.x_bar), 1e-9)) ++inside;
    }
  }
  CHECK(failures == 0);
  REQUIRE(steps > 0);
  CHECK(inside >= 0.99 * steps);
}
